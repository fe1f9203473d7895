use serde::Serialize;

use super::{in_topk, uncertainty_order, EvalError};
use crate::cooccur::UncertaintyMatrix;
use crate::data::{pollute, FamilyGeometry, FamilySample, FeatureStore, NoiseConfig};
use crate::model::Model;

const CHUNK: usize = 256;

/// Final-step outputs for every family at one anticipation time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub tau_a: f64,
    pub truths: Vec<usize>,
    pub probs: Vec<Vec<f64>>,
    pub u: Vec<f64>,
}

impl Evaluation {
    pub fn len(&self) -> usize {
        self.truths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truths.is_empty()
    }

    pub fn mean_u(&self) -> f64 {
        self.u.iter().sum::<f64>() / self.u.len().max(1) as f64
    }

    pub fn topk_accuracy(&self, k: usize) -> Result<f64, EvalError> {
        super::topk_accuracy(&self.probs, &self.truths, k)
    }
}

/// Runs the model on the window ending `tau_a` before every family's
/// target segment; the observation starts where the family stream starts.
pub fn evaluate_at(
    model: &Model,
    families: &[FamilySample],
    store: &FeatureStore,
    geometry: &FamilyGeometry,
    tau_a: f64,
) -> Result<Evaluation, EvalError> {
    if families.is_empty() {
        return Err(EvalError::Empty);
    }
    let window = geometry.window(tau_a)?;
    let mut out = Evaluation {
        tau_a,
        truths: Vec::with_capacity(families.len()),
        probs: Vec::with_capacity(families.len()),
        u: Vec::with_capacity(families.len()),
    };
    for chunk in families.chunks(CHUNK) {
        let streams: Vec<&[Vec<f64>]> = chunk
            .iter()
            .map(|f| {
                let rows = store
                    .video(&f.video_id)
                    .ok_or_else(|| crate::data::DataError::MissingVideo(f.video_id.clone()))?;
                Ok(&rows[f.stream_start..f.stream_start + window.n_o()])
            })
            .collect::<Result<_, EvalError>>()?;
        for (f, pred) in chunk.iter().zip(model.predict(&streams, &window)?) {
            let last = pred.last();
            out.truths.push(f.target);
            out.probs.push(last.probs.clone());
            out.u.push(last.u);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseRow {
    pub eta: f64,
    pub top5: f64,
    pub mean_u: f64,
}

/// Top-5 accuracy and mean uncertainty with Gaussian noise of each
/// intensity added to the features.
pub fn noise_sweep(
    model: &Model,
    families: &[FamilySample],
    store: &FeatureStore,
    geometry: &FamilyGeometry,
    tau_a: f64,
    etas: &[f64],
    seed: u64,
) -> Result<Vec<NoiseRow>, EvalError> {
    etas.iter()
        .map(|&eta| {
            let noisy = pollute(store, NoiseConfig { eta, seed })?;
            let ev = evaluate_at(model, families, &noisy, geometry, tau_a)?;
            Ok(NoiseRow {
                eta,
                top5: ev.topk_accuracy(5)?,
                mean_u: ev.mean_u(),
            })
        })
        .collect()
}

/// Kendall's tau-b; `None` when either sequence is constant.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "kendall_tau needs equal lengths");
    let (mut s, mut ta, mut tb, mut n0) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let da = (a[i] - a[j]).partial_cmp(&0.0).map_or(0, |o| o as i64);
            let db = (b[i] - b[j]).partial_cmp(&0.0).map_or(0, |o| o as i64);
            n0 += 1;
            ta += i64::from(da == 0);
            tb += i64::from(db == 0);
            s += da * db;
        }
    }
    let denom = (((n0 - ta) * (n0 - tb)) as f64).sqrt();
    (denom > 0.0).then(|| s as f64 / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankAgreement {
    /// Mean over families with a defined tau.
    pub mean_tau: Option<f64>,
    pub families: usize,
    /// Families whose predicted uncertainties were all equal.
    pub undefined: usize,
}

/// Agreement between anticipation time and predicted uncertainty within
/// each family. `evals` holds one evaluation per anticipation time over the
/// same families in the same order.
pub fn family_rank_agreement(evals: &[Evaluation]) -> Result<RankAgreement, EvalError> {
    if evals.len() < 2 {
        return Err(EvalError::Invalid("need at least two anticipation times".into()));
    }
    let n = evals[0].len();
    if let Some(e) = evals.iter().find(|e| e.len() != n) {
        return Err(EvalError::Length(e.len(), n));
    }
    let taus: Vec<f64> = evals.iter().map(|e| e.tau_a).collect();
    let mut sum = 0.0;
    let mut defined = 0;
    for i in 0..n {
        let u: Vec<f64> = evals.iter().map(|e| e.u[i]).collect();
        if let Some(t) = kendall_tau(&taus, &u) {
            sum += t;
            defined += 1;
        }
    }
    Ok(RankAgreement {
        mean_tau: (defined > 0).then(|| sum / defined as f64),
        families: n,
        undefined: n - defined,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionScheme {
    /// Classes in one of the `k` highest-ranked pairs versus the rest.
    TopPairs(usize),
    /// Ranked pairs split into four equal parts; a class belongs to the
    /// part of its highest-ranked pair.
    PairQuartiles,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionRow {
    pub label: String,
    pub classes: Vec<usize>,
    pub samples: usize,
    pub top5: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassPartitionReport {
    pub scheme: PartitionScheme,
    pub rows: Vec<PartitionRow>,
}

fn partition_rows(
    groups: Vec<(String, Vec<usize>)>,
    eval: &Evaluation,
) -> Vec<PartitionRow> {
    groups
        .into_iter()
        .map(|(label, classes)| {
            let idx: Vec<usize> = (0..eval.len())
                .filter(|&i| classes.binary_search(&eval.truths[i]).is_ok())
                .collect();
            let hits = idx
                .iter()
                .filter(|&&i| in_topk(&eval.probs[i], eval.truths[i], 5))
                .count();
            PartitionRow {
                label,
                classes,
                samples: idx.len(),
                top5: (!idx.is_empty()).then(|| hits as f64 / idx.len() as f64),
            }
        })
        .collect()
}

/// Top-5 accuracy over classes grouped by how strongly they co-occur in
/// `matrix`; classes with no positive pair form an `unranked` group.
pub fn class_partition_report(
    matrix: &UncertaintyMatrix,
    eval: &Evaluation,
    scheme: PartitionScheme,
) -> Result<ClassPartitionReport, EvalError> {
    if eval.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = matrix.size();
    let ranked = matrix.ranked_pairs();
    // Rank of each class's best pair.
    let mut best = vec![None; n];
    for (r, &(a, b, _)) in ranked.iter().enumerate() {
        for c in [a, b] {
            if best[c].is_none() {
                best[c] = Some(r);
            }
        }
    }
    let unranked: Vec<usize> = (0..n).filter(|&c| best[c].is_none()).collect();
    let mut groups = match scheme {
        PartitionScheme::TopPairs(k) => {
            if k == 0 {
                return Err(EvalError::Invalid("top pair count must be at least 1".into()));
            }
            let (top, rest): (Vec<usize>, Vec<usize>) = (0..n)
                .filter(|&c| best[c].is_some())
                .partition(|&c| best[c].is_some_and(|r| r < k));
            vec![(format!("top{k}"), top), ("other".to_string(), rest)]
        }
        PartitionScheme::PairQuartiles => (0..4)
            .map(|q| {
                let classes = (0..n)
                    .filter(|&c| best[c].is_some_and(|r| r * 4 / ranked.len() == q))
                    .collect();
                (format!("q{}", q + 1), classes)
            })
            .collect(),
    };
    groups.push(("unranked".to_string(), unranked));
    Ok(ClassPartitionReport {
        scheme,
        rows: partition_rows(groups, eval),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuartileRow {
    /// 1 holds the most uncertain quarter.
    pub quartile: usize,
    pub samples: usize,
    pub mean_u: f64,
    pub top5: f64,
}

/// Samples split into four parts by descending uncertainty.
pub fn uncertainty_quartile_report(eval: &Evaluation) -> Result<Vec<QuartileRow>, EvalError> {
    let n = eval.len();
    if n < 4 {
        return Err(EvalError::Invalid(format!("{n} samples cannot form quartiles")));
    }
    let order = uncertainty_order(&eval.u);
    Ok((0..4)
        .map(|q| {
            let part = &order[q * n / 4..(q + 1) * n / 4];
            let hits = part
                .iter()
                .filter(|&&i| in_topk(&eval.probs[i], eval.truths[i], 5))
                .count();
            QuartileRow {
                quartile: q + 1,
                samples: part.len(),
                mean_u: part.iter().map(|&i| eval.u[i]).sum::<f64>() / part.len() as f64,
                top5: hits as f64 / part.len() as f64,
            }
        })
        .collect())
}
