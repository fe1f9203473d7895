use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DataError, FeatureSource, FeatureStore};
use crate::cooccur::{AnnotationCorpus, KnowledgeEdgeSet, Segment, Video, Vocabulary};

/// How successor sets are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuccessorLayout {
    /// Classes form groups of `branching` consecutive ids; every class in a
    /// group is followed by the members of the next group in a random
    /// cycle over all groups.
    Grouped,
    /// Each class draws its own `branching` successors.
    Random,
}

/// Parameters of a generated corpus. Times are in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    /// Successors per class.
    pub branching: usize,
    pub layout: SuccessorLayout,
    /// 0 puts all mass on one successor, 1 spreads it evenly over all.
    pub successor_entropy: f64,
    pub feat_dim: usize,
    pub feature_noise: f64,
    pub videos: usize,
    /// Extra held-out videos drawn from the same chain.
    pub test_videos: usize,
    pub segments_per_video: usize,
    pub seed: u64,
    pub delta: f64,
    /// Background footage before the first segment.
    pub lead_in: f64,
    pub min_segment: f64,
    pub max_segment: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 20,
            branching: 4,
            layout: SuccessorLayout::Grouped,
            successor_entropy: 1.0,
            feat_dim: 16,
            feature_noise: 1.0,
            videos: 50,
            test_videos: 0,
            segments_per_video: 20,
            seed: 0,
            delta: 0.25,
            lead_in: 4.0,
            min_segment: 1.0,
            max_segment: 2.0,
        }
    }
}

impl SyntheticSpec {
    fn snippets(&self, secs: f64) -> usize {
        (secs / self.delta).round() as usize
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let fail = |m: String| Err(DataError::Spec(m));
        if self.classes < 2 {
            return fail(format!("classes {} < 2", self.classes));
        }
        if self.branching < 1 || self.branching >= self.classes {
            return fail(format!(
                "branching {} must be in 1..{}",
                self.branching, self.classes
            ));
        }
        if self.layout == SuccessorLayout::Grouped && self.classes % self.branching != 0 {
            return fail(format!(
                "grouped layout needs classes {} divisible by branching {}",
                self.classes, self.branching
            ));
        }
        if !(0.0..=1.0).contains(&self.successor_entropy) {
            return fail(format!("successor_entropy {} not in [0, 1]", self.successor_entropy));
        }
        if self.feat_dim == 0 || !(self.feature_noise >= 0.0) {
            return fail(format!(
                "feat_dim {} / feature_noise {}",
                self.feat_dim, self.feature_noise
            ));
        }
        if self.videos == 0 || self.segments_per_video == 0 {
            return fail("videos and segments_per_video must be positive".into());
        }
        if !(self.delta > 0.0) || self.lead_in < 0.0 {
            return fail(format!("delta {} / lead_in {}", self.delta, self.lead_in));
        }
        let (lo, hi) = (self.snippets(self.min_segment), self.snippets(self.max_segment));
        if lo == 0 || hi < lo {
            return fail(format!(
                "segment length range [{}, {}]",
                self.min_segment, self.max_segment
            ));
        }
        Ok(())
    }
}

/// Successor distribution of every class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// `successors[c]` lists `(class, probability)`; the favoured successor
    /// comes first.
    pub successors: Vec<Vec<(usize, f64)>>,
}

impl GroundTruth {
    /// Class pairs `(a, b)`, `a < b`, that follow some shared antecedent
    /// with positive probability.
    pub fn sibling_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = std::collections::BTreeSet::new();
        for succ in &self.successors {
            let ids: Vec<usize> = succ.iter().filter(|s| s.1 > 0.0).map(|s| s.0).collect();
            for (i, &a) in ids.iter().enumerate() {
                for &b in &ids[i + 1..] {
                    out.insert((a.min(b), a.max(b)));
                }
            }
        }
        out.into_iter().collect()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub spec: SyntheticSpec,
    pub vocab: Vocabulary,
    /// Training videos (`train_*`) followed by held-out ones (`test_*`).
    pub corpus: AnnotationCorpus,
    pub store: FeatureStore,
    pub truth: GroundTruth,
    pub edges: KnowledgeEdgeSet,
}

impl SyntheticCorpus {
    pub fn train(&self) -> AnnotationCorpus {
        self.corpus.filter(|id| id.starts_with("train_"))
    }

    pub fn test(&self) -> AnnotationCorpus {
        self.corpus.filter(|id| id.starts_with("test_"))
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// One verb per group of `group` consecutive classes and one noun per
/// class: class `c` is `(c / group, c)`.
fn synthetic_vocab(classes: usize, group: usize) -> Vocabulary {
    let verbs = classes.div_ceil(group);
    let v: BTreeMap<u32, String> = (0..verbs as u32).map(|i| (i, format!("verb_{i}"))).collect();
    let n: BTreeMap<u32, String> = (0..classes as u32).map(|i| (i, format!("noun_{i}"))).collect();
    let pairs = (0..classes).map(|c| ((c / group) as u32, c as u32));
    Vocabulary::new(v, n, pairs).expect("pairs are valid")
}

/// Nouns of one group share a place and every verb has its own tool; an
/// unselected relation adds random edges that must be ignored.
fn synthetic_edges(vocab: &Vocabulary, group: usize, r: &mut ChaCha8Rng) -> KnowledgeEdgeSet {
    let mut e = KnowledgeEdgeSet::new();
    for (&id, verb) in vocab.verbs() {
        e.insert(verb, "UsedFor", &format!("tool_{id}")).expect("known relation");
    }
    let places = vocab.verbs().len();
    for (&id, noun) in vocab.nouns() {
        let p = id as usize / group;
        e.insert(noun, "LocatedNear", &format!("place_{p}")).expect("known relation");
        let q = r.gen_range(0..places);
        e.insert(noun, "Antonym", &format!("place_{q}")).expect("known relation");
    }
    e
}

/// First-order Markov activity sequences with class-embedding features.
///
/// Video `i` starts with class `i mod C`, so every class occurs whenever
/// there are at least `C` videos.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus, DataError> {
    spec.validate()?;
    let c = spec.classes;
    let mut structure = rng(spec.seed, 0);

    let s = spec.successor_entropy;
    let k = spec.branching;
    let groups = c.div_ceil(k);
    // Groups visited in one random cycle.
    let mut cycle: Vec<usize> = (0..groups).collect();
    cycle.shuffle(&mut structure);
    let mut next_group = vec![0; groups];
    for (i, &g) in cycle.iter().enumerate() {
        next_group[g] = cycle[(i + 1) % groups];
    }
    let successors: Vec<Vec<(usize, f64)>> = (0..c)
        .map(|a| {
            let mut others: Vec<usize> = match spec.layout {
                SuccessorLayout::Grouped => {
                    let g = next_group[a / k];
                    (g * k..(g + 1) * k).collect()
                }
                SuccessorLayout::Random => (0..c).filter(|&b| b != a).collect(),
            };
            others.shuffle(&mut structure);
            others
                .into_iter()
                .take(k)
                .enumerate()
                .map(|(i, b)| (b, if i == 0 { 1.0 - s + s / k as f64 } else { s / k as f64 }))
                .collect()
        })
        .collect();
    let embeddings: Vec<Vec<f64>> = (0..c)
        .map(|_| {
            (0..spec.feat_dim)
                .map(|_| StandardNormal.sample(&mut structure))
                .collect()
        })
        .collect();
    let vocab = synthetic_vocab(c, k);
    let edges = synthetic_edges(&vocab, k, &mut structure);

    let (lo, hi) = (spec.snippets(spec.min_segment), spec.snippets(spec.max_segment));
    let lead = spec.snippets(spec.lead_in);
    let names = (0..spec.videos)
        .map(|i| format!("train_{i:04}"))
        .chain((0..spec.test_videos).map(|i| format!("test_{i:04}")));
    let mut videos = Vec::new();
    let mut store = FeatureStore::new(spec.feat_dim, FeatureSource::Synthetic);
    for (v, name) in names.enumerate() {
        let mut r = rng(spec.seed, 1 + v as u64);
        let mut class = v % c;
        let mut t = lead;
        let mut segments = Vec::with_capacity(spec.segments_per_video);
        let mut labels = vec![None; lead];
        for seg in 0..spec.segments_per_video {
            if seg > 0 {
                let u: f64 = r.gen();
                let mut acc = 0.0;
                let succ = &successors[class];
                class = succ[succ.len() - 1].0;
                for &(b, p) in succ {
                    acc += p;
                    if u < acc {
                        class = b;
                        break;
                    }
                }
            }
            let len = r.gen_range(lo..=hi);
            segments.push(Segment {
                start: t as f64 * spec.delta,
                stop: (t + len) as f64 * spec.delta,
                activity: class,
            });
            labels.extend(std::iter::repeat(Some(class)).take(len));
            t += len;
        }
        let rows = labels
            .iter()
            .map(|l| {
                (0..spec.feat_dim)
                    .map(|d| {
                        let base = l.map_or(0.0, |cl| embeddings[cl][d]);
                        let e: f64 = StandardNormal.sample(&mut r);
                        base + spec.feature_noise * e
                    })
                    .collect()
            })
            .collect();
        store.insert(name.clone(), rows)?;
        videos.push(Video { id: name, segments });
    }
    Ok(SyntheticCorpus {
        spec: spec.clone(),
        vocab,
        corpus: AnnotationCorpus::new(videos)?,
        store,
        truth: GroundTruth { successors },
        edges,
    })
}
