//! Class co-occurrence statistics.
//!
//! Two sources score how likely two activity classes are to follow the same
//! context:
//!
//! * the internal matrix, counted from annotation streams: every pair of
//!   transitions `c -> a` and `c -> b` out of the same antecedent class `c`
//!   adds one to entry `(a, b)`;
//! * the external matrix, counted from a knowledge-graph edge dump: the number
//!   of one-intermediate-node paths between two verb (or noun) lemmas, with
//!   activity scores obtained by adding the verb and noun scores.
//!
//! [`merge_rows`] turns one row of each into the co-occurrence set of a class.

mod external;
mod internal;
pub mod io;

pub use external::{
    build_external_matrix, normalize_lemma, normalize_relation, ExternalMatrices,
    KnowledgeEdgeSet, CONCEPTNET_RELATIONS, DEFAULT_SELECTED_RELATIONS,
};
pub use internal::{build_internal_matrix, SuccessorCounts};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labelspace::CooccurrenceSet;

#[derive(Debug, Error)]
pub enum CooccurError {
    #[error("video {video}: segment {segment} has unknown activity id {activity}")]
    UnknownActivity {
        video: String,
        segment: usize,
        activity: usize,
    },
    #[error("video {video}: segment {segment} is not sorted by start or has start >= stop")]
    BadSegment { video: String, segment: usize },
    #[error("activity ({verb}, {noun}) refers to a missing verb or noun")]
    DanglingPair { verb: u32, noun: u32 },
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },
    #[error("no knowledge-graph relations selected")]
    NoRelations,
    #[error("matrix dimension mismatch: {0}")]
    Dimension(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Verb, noun, and activity (verb-noun pair) label maps.
///
/// Activity ids are dense, assigned to the unique observed pairs in
/// ascending `(verb_id, noun_id)` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    verbs: BTreeMap<u32, String>,
    nouns: BTreeMap<u32, String>,
    activities: Vec<(u32, u32)>,
    index: HashMap<(u32, u32), usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    verbs: BTreeMap<u32, String>,
    nouns: BTreeMap<u32, String>,
    activities: Vec<(u32, u32)>,
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = CooccurError;

    fn try_from(r: VocabularyRepr) -> Result<Self, CooccurError> {
        Vocabulary::new(r.verbs, r.nouns, r.activities)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        Self {
            verbs: v.verbs,
            nouns: v.nouns,
            activities: v.activities,
        }
    }
}

impl Vocabulary {
    pub fn new(
        verbs: BTreeMap<u32, String>,
        nouns: BTreeMap<u32, String>,
        pairs: impl IntoIterator<Item = (u32, u32)>,
    ) -> Result<Self, CooccurError> {
        let mut activities: Vec<(u32, u32)> = pairs.into_iter().collect();
        activities.sort_unstable();
        activities.dedup();
        for &(verb, noun) in &activities {
            if !verbs.contains_key(&verb) || !nouns.contains_key(&noun) {
                return Err(CooccurError::DanglingPair { verb, noun });
            }
        }
        let index = activities
            .iter()
            .enumerate()
            .map(|(i, &p)| (p, i))
            .collect();
        Ok(Self {
            verbs,
            nouns,
            activities,
            index,
        })
    }

    pub fn num_activities(&self) -> usize {
        self.activities.len()
    }

    pub fn verbs(&self) -> &BTreeMap<u32, String> {
        &self.verbs
    }

    pub fn nouns(&self) -> &BTreeMap<u32, String> {
        &self.nouns
    }

    pub fn activity(&self, id: usize) -> Option<(u32, u32)> {
        self.activities.get(id).copied()
    }

    pub fn activity_id(&self, verb: u32, noun: u32) -> Option<usize> {
        self.index.get(&(verb, noun)).copied()
    }

    pub fn activity_name(&self, id: usize) -> String {
        match self.activity(id) {
            Some((v, n)) => format!("{} {}", self.verbs[&v], self.nouns[&n]),
            None => format!("#{id}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub stop: f64,
    pub activity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Video {
    pub id: String,
    pub segments: Vec<Segment>,
}

/// Annotated videos, each an ordered list of activity segments.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnnotationCorpus {
    videos: Vec<Video>,
}

impl AnnotationCorpus {
    /// Validates that segments are sorted by start and have `start < stop`.
    pub fn new(videos: Vec<Video>) -> Result<Self, CooccurError> {
        for v in &videos {
            for (k, s) in v.segments.iter().enumerate() {
                let unsorted = k > 0 && v.segments[k - 1].start > s.start;
                if !(s.start < s.stop) || unsorted {
                    return Err(CooccurError::BadSegment {
                        video: v.id.clone(),
                        segment: k,
                    });
                }
            }
        }
        Ok(Self { videos })
    }

    pub fn videos(&self) -> &[Video] {
        &self.videos
    }

    pub fn video(&self, id: &str) -> Option<&Video> {
        self.videos.iter().find(|v| v.id == id)
    }

    pub fn num_segments(&self) -> usize {
        self.videos.iter().map(|v| v.segments.len()).sum()
    }

    /// Videos whose id satisfies `keep`.
    pub fn filter(&self, keep: impl Fn(&str) -> bool) -> Self {
        Self {
            videos: self.videos.iter().filter(|v| keep(&v.id)).cloned().collect(),
        }
    }

    /// Concatenates the videos of two corpora.
    pub fn merged(&self, other: &Self) -> Self {
        let mut videos = self.videos.clone();
        videos.extend(other.videos.iter().cloned());
        Self { videos }
    }

    /// Instance count per activity class.
    pub fn class_counts(&self, classes: usize) -> Vec<usize> {
        let mut counts = vec![0; classes];
        for s in self.videos.iter().flat_map(|v| &v.segments) {
            if s.activity < classes {
                counts[s.activity] += 1;
            }
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixKind {
    Internal,
    ExternalVerb,
    ExternalNoun,
    ExternalActivity,
}

/// Square, symmetric, zero-diagonal matrix of nonnegative class-pair counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UncertaintyMatrix {
    kind: MatrixKind,
    n: usize,
    values: Vec<u64>,
}

impl UncertaintyMatrix {
    pub fn zeros(kind: MatrixKind, n: usize) -> Self {
        Self {
            kind,
            n,
            values: vec![0; n * n],
        }
    }

    /// Builds from a dense row-major buffer, checking symmetry and the zero
    /// diagonal.
    pub fn from_values(kind: MatrixKind, n: usize, values: Vec<u64>) -> Result<Self, CooccurError> {
        if values.len() != n * n {
            return Err(CooccurError::Dimension(format!(
                "{} values for a {n}x{n} matrix",
                values.len()
            )));
        }
        for i in 0..n {
            if values[i * n + i] != 0 {
                return Err(CooccurError::Dimension(format!("nonzero diagonal at {i}")));
            }
            for j in 0..i {
                if values[i * n + j] != values[j * n + i] {
                    return Err(CooccurError::Dimension(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { kind, n, values })
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    /// Adds `v` to both `(i, j)` and `(j, i)`; ignored on the diagonal.
    pub(crate) fn add_pair(&mut self, i: usize, j: usize, v: u64) {
        if i != j {
            self.values[i * self.n + j] += v;
            self.values[j * self.n + i] += v;
        }
    }

    /// Elementwise sum; kinds are taken from `self`.
    pub fn sum(&self, other: &Self) -> Result<Self, CooccurError> {
        if self.n != other.n {
            return Err(CooccurError::Dimension(format!("{} vs {}", self.n, other.n)));
        }
        Ok(Self {
            kind: self.kind,
            n: self.n,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// Number of nonzero off-diagonal unordered pairs.
    pub fn nonzero_pairs(&self) -> usize {
        (0..self.n)
            .map(|i| (i + 1..self.n).filter(|&j| self.get(i, j) > 0).count())
            .sum()
    }

    /// Unordered pairs `(i, j, value)` with `i < j` and value > 0, sorted by
    /// descending value then ascending `(i, j)`.
    pub fn ranked_pairs(&self) -> Vec<(usize, usize, u64)> {
        let mut out: Vec<(usize, usize, u64)> = (0..self.n)
            .flat_map(|i| (i + 1..self.n).map(move |j| (i, j)))
            .filter_map(|(i, j)| {
                let v = self.get(i, j);
                (v > 0).then_some((i, j, v))
            })
            .collect();
        out.sort_by(|a, b| b.2.cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
        out
    }
}

/// Co-occurrence set of `target`: every other class whose merged
/// internal + external score is positive, optionally capped to the `top_k`
/// highest scores (ties to the lower class id).
pub fn merge_rows(
    internal_row: &[u64],
    external_row: &[u64],
    target: usize,
    top_k: Option<usize>,
) -> Result<CooccurrenceSet, CooccurError> {
    if internal_row.len() != external_row.len() || target >= internal_row.len() {
        return Err(CooccurError::Dimension(format!(
            "rows of length {} and {} with target {target}",
            internal_row.len(),
            external_row.len()
        )));
    }
    let mut members: Vec<(usize, u64)> = internal_row
        .iter()
        .zip(external_row)
        .enumerate()
        .filter(|&(j, _)| j != target)
        .map(|(j, (a, b))| (j, a + b))
        .filter(|&(_, s)| s > 0)
        .collect();
    if let Some(k) = top_k {
        if members.len() > k {
            members.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            members.truncate(k);
            members.sort_by_key(|m| m.0);
        }
    }
    Ok(CooccurrenceSet::new(vec![target], members))
}
