use std::collections::BTreeMap;

use super::{AnnotationCorpus, CooccurError, MatrixKind, UncertaintyMatrix, Vocabulary};

/// Per antecedent class, how many times each class immediately follows it.
///
/// Counts are additive across corpora, so shards of videos can be counted
/// independently and merged before the matrix is formed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SuccessorCounts {
    counts: BTreeMap<usize, BTreeMap<usize, u64>>,
}

impl SuccessorCounts {
    pub fn from_corpus(corpus: &AnnotationCorpus, vocab: &Vocabulary) -> Result<Self, CooccurError> {
        let classes = vocab.num_activities();
        let mut out = Self::default();
        for video in corpus.videos() {
            for (k, seg) in video.segments.iter().enumerate() {
                if seg.activity >= classes {
                    return Err(CooccurError::UnknownActivity {
                        video: video.id.clone(),
                        segment: k,
                        activity: seg.activity,
                    });
                }
            }
            for pair in video.segments.windows(2) {
                *out.counts
                    .entry(pair[0].activity)
                    .or_default()
                    .entry(pair[1].activity)
                    .or_insert(0) += 1;
            }
        }
        Ok(out)
    }

    pub fn merge(&mut self, other: &Self) {
        for (&ante, succ) in &other.counts {
            let slot = self.counts.entry(ante).or_default();
            for (&s, &n) in succ {
                *slot.entry(s).or_insert(0) += n;
            }
        }
    }

    pub fn successors(&self, antecedent: usize) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.counts
            .get(&antecedent)
            .into_iter()
            .flat_map(|m| m.iter().map(|(&s, &n)| (s, n)))
    }

    /// Entry `(a, b)`, `a != b`, is `sum_c n_c(a) * n_c(b)`: the number of
    /// pairs of transition instances out of a shared antecedent class.
    pub fn to_matrix(&self, classes: usize) -> UncertaintyMatrix {
        let mut m = UncertaintyMatrix::zeros(MatrixKind::Internal, classes);
        for succ in self.counts.values() {
            let items: Vec<(usize, u64)> = succ.iter().map(|(&s, &n)| (s, n)).collect();
            for (x, &(a, na)) in items.iter().enumerate() {
                for &(b, nb) in &items[x + 1..] {
                    m.add_pair(a, b, na * nb);
                }
            }
        }
        m
    }
}

/// Internal uncertainty matrix of a corpus. Antecedence is immediate
/// adjacency within one video.
pub fn build_internal_matrix(
    corpus: &AnnotationCorpus,
    vocab: &Vocabulary,
) -> Result<UncertaintyMatrix, CooccurError> {
    Ok(SuccessorCounts::from_corpus(corpus, vocab)?.to_matrix(vocab.num_activities()))
}
