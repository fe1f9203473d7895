//! Soft target labels built from co-occurrence sets.
//!
//! A single sample of class `c` gets `1 - alpha` on `c` and `alpha` spread
//! uniformly over its co-occurrence set. A mixed pair of samples gets
//! `(1 - alpha) / 2` on each target and `alpha` spread over the union of the
//! two sets. An empty set hands the `alpha` mass back to the target(s).

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::Serialize;
use thiserror::Error;

use crate::cooccur::{merge_rows, CooccurError, UncertaintyMatrix};

#[derive(Debug, Error, PartialEq)]
pub enum LabelError {
    #[error("alpha must lie in [0, 1), got {0}")]
    Alpha(f64),
    #[error("class {class} out of range for {classes} classes")]
    Class { class: usize, classes: usize },
    #[error("pair targets must differ, got {0} twice")]
    SameClass(usize),
    #[error("label space needs at least one matrix")]
    NoMatrix,
    #[error("matrix size {0} does not match {1} classes")]
    Size(usize, usize),
}

/// Classes that may co-occur with one or two target classes, with their
/// merged scores. Targets are never members; scores are positive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CooccurrenceSet {
    targets: Vec<usize>,
    members: Vec<(usize, u64)>,
}

impl CooccurrenceSet {
    /// Drops members that are targets or have a zero score; sorts by id and
    /// sums duplicate ids.
    pub fn new(targets: Vec<usize>, members: impl IntoIterator<Item = (usize, u64)>) -> Self {
        let mut merged: BTreeMap<usize, u64> = BTreeMap::new();
        for (id, s) in members {
            if s > 0 && !targets.contains(&id) {
                *merged.entry(id).or_insert(0) += s;
            }
        }
        Self {
            targets,
            members: merged.into_iter().collect(),
        }
    }

    pub fn empty(target: usize) -> Self {
        Self {
            targets: vec![target],
            members: Vec::new(),
        }
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn members(&self) -> &[(usize, u64)] {
        &self.members
    }

    pub fn member_ids(&self) -> Vec<usize> {
        self.members.iter().map(|m| m.0).collect()
    }

    pub fn score(&self, id: usize) -> Option<u64> {
        self.members
            .binary_search_by_key(&id, |m| m.0)
            .ok()
            .map(|i| self.members[i].1)
    }

    pub fn contains(&self, id: usize) -> bool {
        self.score(id).is_some()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Probability vector over all classes used as a training target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetLabel {
    probs: Vec<f64>,
    alpha: f64,
}

impl TargetLabel {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Classes with positive probability, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.probs.len()).filter(|&j| self.probs[j] > 0.0).collect()
    }

    pub fn is_one_hot(&self) -> bool {
        self.support().len() == 1
    }

    /// Highest-probability class, lowest id on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (j, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = j;
            }
        }
        best
    }

    /// `(class, prob)` for the support.
    pub fn sparse(&self) -> Vec<(usize, f64)> {
        self.support().into_iter().map(|j| (j, self.probs[j])).collect()
    }
}

fn check(alpha: f64, class: usize, classes: usize) -> Result<(), LabelError> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(LabelError::Alpha(alpha));
    }
    if class >= classes {
        return Err(LabelError::Class { class, classes });
    }
    Ok(())
}

fn spread(probs: &mut [f64], set: &CooccurrenceSet, alpha: f64) -> Result<(), LabelError> {
    let share = alpha / set.len() as f64;
    for &(j, _) in set.members() {
        if j >= probs.len() {
            return Err(LabelError::Class {
                class: j,
                classes: probs.len(),
            });
        }
        probs[j] = share;
    }
    Ok(())
}

/// Soft label of a single sample with target `c`.
pub fn single_label(
    c: usize,
    set: &CooccurrenceSet,
    alpha: f64,
    classes: usize,
) -> Result<TargetLabel, LabelError> {
    check(alpha, c, classes)?;
    let mut probs = vec![0.0; classes];
    if set.is_empty() || alpha == 0.0 {
        probs[c] = 1.0;
    } else {
        probs[c] = 1.0 - alpha;
        spread(&mut probs, set, alpha)?;
    }
    Ok(TargetLabel { probs, alpha })
}

/// Soft label of a mixed pair with distinct targets `ci`, `cj`.
pub fn pair_label(
    ci: usize,
    cj: usize,
    set: &CooccurrenceSet,
    alpha: f64,
    classes: usize,
) -> Result<TargetLabel, LabelError> {
    check(alpha, ci, classes)?;
    check(alpha, cj, classes)?;
    if ci == cj {
        return Err(LabelError::SameClass(ci));
    }
    let mut probs = vec![0.0; classes];
    if set.is_empty() || alpha == 0.0 {
        probs[ci] = 0.5;
        probs[cj] = 0.5;
    } else {
        probs[ci] = (1.0 - alpha) / 2.0;
        probs[cj] = (1.0 - alpha) / 2.0;
        spread(&mut probs, set, alpha)?;
    }
    Ok(TargetLabel { probs, alpha })
}

/// Union of two single-class sets minus both targets; scores add where both
/// sets contain a class.
pub fn pair_set(a: &CooccurrenceSet, b: &CooccurrenceSet, ci: usize, cj: usize) -> CooccurrenceSet {
    CooccurrenceSet::new(
        vec![ci, cj],
        a.members().iter().chain(b.members()).copied(),
    )
}

/// Per-class co-occurrence sets and labels for one pair of matrices.
/// Sets are merged from the matrix rows the first time a class is asked for.
#[derive(Debug)]
pub struct LabelSpace {
    classes: usize,
    alpha: f64,
    top_k: Option<usize>,
    internal: Option<UncertaintyMatrix>,
    external: Option<UncertaintyMatrix>,
    sets: Vec<OnceLock<CooccurrenceSet>>,
}

#[derive(Debug, Serialize)]
struct ExportEntry {
    alpha: f64,
    members: Vec<usize>,
    probs: BTreeMap<usize, f64>,
}

impl LabelSpace {
    /// Uses whichever matrices are given; a missing one counts as all-zero.
    pub fn new(
        internal: Option<UncertaintyMatrix>,
        external: Option<UncertaintyMatrix>,
        alpha: f64,
        top_k: Option<usize>,
    ) -> Result<Self, LabelError> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(LabelError::Alpha(alpha));
        }
        let classes = match (&internal, &external) {
            (Some(a), Some(b)) if a.size() != b.size() => {
                return Err(LabelError::Size(b.size(), a.size()))
            }
            (Some(a), _) => a.size(),
            (None, Some(b)) => b.size(),
            (None, None) => return Err(LabelError::NoMatrix),
        };
        Ok(Self {
            classes,
            alpha,
            top_k,
            internal,
            external,
            sets: (0..classes).map(|_| OnceLock::new()).collect(),
        })
    }

    /// A label space where every set is empty, so all labels are one-hot.
    pub fn one_hot(classes: usize) -> Self {
        let mut s = Self::new(
            None,
            Some(UncertaintyMatrix::zeros(
                crate::cooccur::MatrixKind::ExternalActivity,
                classes,
            )),
            0.0,
            None,
        )
        .expect("valid");
        s.external = None;
        s
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn set(&self, c: usize) -> &CooccurrenceSet {
        self.sets[c].get_or_init(|| {
            let zeros = vec![0; self.classes];
            let ri = self.internal.as_ref().map_or(&zeros[..], |m| m.row(c));
            let re = self.external.as_ref().map_or(&zeros[..], |m| m.row(c));
            merge_rows(ri, re, c, self.top_k)
                .unwrap_or_else(|_: CooccurError| CooccurrenceSet::empty(c))
        })
    }

    pub fn single(&self, c: usize) -> Result<TargetLabel, LabelError> {
        if c >= self.classes {
            return Err(LabelError::Class {
                class: c,
                classes: self.classes,
            });
        }
        single_label(c, self.set(c), self.alpha, self.classes)
    }

    pub fn pair(&self, ci: usize, cj: usize) -> Result<TargetLabel, LabelError> {
        for c in [ci, cj] {
            if c >= self.classes {
                return Err(LabelError::Class {
                    class: c,
                    classes: self.classes,
                });
            }
        }
        let set = pair_set(self.set(ci), self.set(cj), ci, cj);
        pair_label(ci, cj, &set, self.alpha, self.classes)
    }

    /// JSON object `class_id -> {alpha, members, probs}` with sparse probs.
    pub fn export_json(&self) -> serde_json::Value {
        let map: BTreeMap<usize, ExportEntry> = (0..self.classes)
            .map(|c| {
                let label = self.single(c).expect("class in range");
                (
                    c,
                    ExportEntry {
                        alpha: self.alpha,
                        members: self.set(c).member_ids(),
                        probs: label.sparse().into_iter().collect(),
                    },
                )
            })
            .collect();
        serde_json::to_value(map).expect("serialisable")
    }
}
