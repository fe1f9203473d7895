//! Accuracy metrics and the reliability and robustness reports.

mod reports;

pub use reports::{
    class_partition_report, evaluate_at, family_rank_agreement, kendall_tau, noise_sweep,
    uncertainty_quartile_report, ClassPartitionReport, Evaluation, NoiseRow, PartitionRow,
    PartitionScheme, QuartileRow, RankAgreement,
};

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no samples to evaluate")]
    Empty,
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

/// Indices of the `k` largest entries, largest first; equal values are
/// ordered by ascending index.
pub fn topk(probs: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

pub fn in_topk(probs: &[f64], truth: usize, k: usize) -> bool {
    // Count entries that outrank the truth under the tie rule.
    let p = probs[truth];
    let above = probs
        .iter()
        .enumerate()
        .filter(|&(j, &q)| q > p || (q == p && j < truth))
        .count();
    above < k
}

fn check(probs: &[Vec<f64>], truths: &[usize], k: usize) -> Result<(), EvalError> {
    if probs.is_empty() {
        return Err(EvalError::Empty);
    }
    if probs.len() != truths.len() {
        return Err(EvalError::Length(probs.len(), truths.len()));
    }
    if k == 0 {
        return Err(EvalError::Invalid("k must be at least 1".into()));
    }
    Ok(())
}

pub fn topk_accuracy(probs: &[Vec<f64>], truths: &[usize], k: usize) -> Result<f64, EvalError> {
    check(probs, truths, k)?;
    let hits = probs
        .iter()
        .zip(truths)
        .filter(|(p, &t)| in_topk(p, t, k))
        .count();
    Ok(hits as f64 / probs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassRecall {
    pub class: usize,
    pub instances: usize,
    pub hits: usize,
    pub recall: f64,
}

pub fn per_class_recall(
    probs: &[Vec<f64>],
    truths: &[usize],
    k: usize,
) -> Result<Vec<ClassRecall>, EvalError> {
    check(probs, truths, k)?;
    let mut tally: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (p, &t) in probs.iter().zip(truths) {
        let e = tally.entry(t).or_default();
        e.0 += 1;
        e.1 += usize::from(in_topk(p, t, k));
    }
    Ok(tally
        .into_iter()
        .map(|(class, (instances, hits))| ClassRecall {
            class,
            instances,
            hits,
            recall: hits as f64 / instances as f64,
        })
        .collect())
}

/// Top-k recall averaged over classes with at least `threshold` instances;
/// `None` when no class qualifies.
pub fn mean_topk_recall(
    probs: &[Vec<f64>],
    truths: &[usize],
    k: usize,
    threshold: usize,
) -> Result<Option<f64>, EvalError> {
    if threshold == 0 {
        return Err(EvalError::Invalid("many-shot threshold must be at least 1".into()));
    }
    let many: Vec<f64> = per_class_recall(probs, truths, k)?
        .into_iter()
        .filter(|r| r.instances >= threshold)
        .map(|r| r.recall)
        .collect();
    if many.is_empty() {
        return Ok(None);
    }
    Ok(Some(many.iter().sum::<f64>() / many.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub samples: usize,
    pub top1: f64,
    pub top5: f64,
    pub mean_top5_recall: Option<f64>,
    pub many_shot_threshold: usize,
    pub per_class: Vec<ClassRecall>,
}

pub fn metric_report(
    probs: &[Vec<f64>],
    truths: &[usize],
    many_shot_threshold: usize,
) -> Result<MetricReport, EvalError> {
    Ok(MetricReport {
        samples: probs.len(),
        top1: topk_accuracy(probs, truths, 1)?,
        top5: topk_accuracy(probs, truths, 5)?,
        mean_top5_recall: mean_topk_recall(probs, truths, 5, many_shot_threshold)?,
        many_shot_threshold,
        per_class: per_class_recall(probs, truths, 5)?,
    })
}

/// Sample indices from most to least uncertain; ties by ascending index.
pub fn uncertainty_order(u: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..u.len()).collect();
    idx.sort_by(|&a, &b| u[b].total_cmp(&u[a]).then(a.cmp(&b)));
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectionPoint {
    pub rejection: f64,
    pub retained: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectionCurve {
    pub k: usize,
    pub points: Vec<RejectionPoint>,
}

/// Top-k accuracy after dropping the `ceil(R * N)` most uncertain samples,
/// for each fraction `R`.
pub fn rejection_curve(
    probs: &[Vec<f64>],
    truths: &[usize],
    u: &[f64],
    fractions: &[f64],
    k: usize,
) -> Result<RejectionCurve, EvalError> {
    check(probs, truths, k)?;
    if u.len() != probs.len() {
        return Err(EvalError::Length(u.len(), probs.len()));
    }
    if fractions.windows(2).any(|w| w[1] < w[0]) || fractions.iter().any(|r| !(0.0..1.0).contains(r)) {
        return Err(EvalError::Invalid(format!(
            "rejection fractions {fractions:?} must be ascending in [0, 1)"
        )));
    }
    let order = uncertainty_order(u);
    let n = probs.len();
    let points = fractions
        .iter()
        .map(|&r| {
            let drop = ((r * n as f64) - 1e-9).ceil().max(0.0) as usize;
            let kept = &order[drop.min(n)..];
            let hits = kept.iter().filter(|&&i| in_topk(&probs[i], truths[i], k)).count();
            RejectionPoint {
                rejection: r,
                retained: kept.len(),
                accuracy: if kept.is_empty() { 0.0 } else { hits as f64 / kept.len() as f64 },
            }
        })
        .collect();
    Ok(RejectionCurve { k, points })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub min: f64,
    pub max: f64,
    /// Counts over equal-width bins of the min-max normalised values.
    pub counts: Vec<usize>,
    /// All values equal; everything sits in the first bin.
    pub degenerate: bool,
}

pub fn uncertainty_histogram(u: &[f64], bins: usize) -> Result<Histogram, EvalError> {
    if bins < 2 {
        return Err(EvalError::Invalid(format!("bins {bins} < 2")));
    }
    if u.is_empty() {
        return Err(EvalError::Empty);
    }
    let min = u.iter().copied().fold(f64::INFINITY, f64::min);
    let max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut counts = vec![0; bins];
    if max == min {
        counts[0] = u.len();
        return Ok(Histogram { min, max, counts, degenerate: true });
    }
    for &x in u {
        let t = (x - min) / (max - min);
        counts[((t * bins as f64) as usize).min(bins - 1)] += 1;
    }
    Ok(Histogram { min, max, counts, degenerate: false })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightNormRow {
    pub class: usize,
    pub instances: usize,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightNormReport {
    /// Descending instance count, ties by ascending class.
    pub rows: Vec<WeightNormRow>,
    /// Mean norm over the more frequent half of the classes.
    pub head_mean: f64,
    pub tail_mean: f64,
}

/// L2 norm of every class weight vector, ordered by class frequency.
pub fn weight_norm_report(rows: &[Vec<f64>], counts: &[usize]) -> Result<WeightNormReport, EvalError> {
    if rows.len() != counts.len() {
        return Err(EvalError::Length(rows.len(), counts.len()));
    }
    if rows.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut out: Vec<WeightNormRow> = rows
        .iter()
        .zip(counts)
        .enumerate()
        .map(|(class, (w, &instances))| WeightNormRow {
            class,
            instances,
            norm: w.iter().map(|x| x * x).sum::<f64>().sqrt(),
        })
        .collect();
    out.sort_by(|a, b| b.instances.cmp(&a.instances).then(a.class.cmp(&b.class)));
    let half = out.len().div_ceil(2);
    let mean = |r: &[WeightNormRow]| {
        if r.is_empty() {
            0.0
        } else {
            r.iter().map(|x| x.norm).sum::<f64>() / r.len() as f64
        }
    };
    Ok(WeightNormReport {
        head_mean: mean(&out[..half]),
        tail_mean: mean(&out[half..]),
        rows: out,
    })
}

pub fn write_rejection_csv(curve: &RejectionCurve, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "R,accuracy")?;
    for p in &curve.points {
        writeln!(w, "{},{}", p.rejection, p.accuracy)?;
    }
    Ok(())
}

pub fn write_noise_csv(rows: &[NoiseRow], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "eta,top5,mean_u")?;
    for r in rows {
        writeln!(w, "{},{},{}", r.eta, r.top5, r.mean_u)?;
    }
    Ok(())
}

pub fn write_histogram_csv(h: &Histogram, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "bin_lo,bin_hi,count")?;
    let bins = h.counts.len();
    for (i, c) in h.counts.iter().enumerate() {
        writeln!(w, "{},{},{}", i as f64 / bins as f64, (i + 1) as f64 / bins as f64, c)?;
    }
    Ok(())
}

pub fn write_weight_norms_csv(r: &WeightNormReport, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "class,instances,norm")?;
    for row in &r.rows {
        writeln!(w, "{},{},{}", row.class, row.instances, row.norm)?;
    }
    Ok(())
}

/// Class-pair partitions followed by sample-uncertainty quartiles; an
/// empty partition has an empty accuracy field.
pub fn write_partitions_csv(
    reports: &[ClassPartitionReport],
    quartiles: &[QuartileRow],
    mut w: impl Write,
) -> std::io::Result<()> {
    writeln!(w, "scheme,partition,classes,samples,top5")?;
    for r in reports {
        let scheme = match r.scheme {
            PartitionScheme::TopPairs(_) => "top_pairs",
            PartitionScheme::PairQuartiles => "pair_quartiles",
        };
        for row in &r.rows {
            let acc = row.top5.map_or(String::new(), |a| a.to_string());
            writeln!(w, "{scheme},{},{},{},{}", row.label, row.classes.len(), row.samples, acc)?;
        }
    }
    for q in quartiles {
        writeln!(w, "uncertainty_quartiles,q{},,{},{}", q.quartile, q.samples, q.top5)?;
    }
    Ok(())
}
