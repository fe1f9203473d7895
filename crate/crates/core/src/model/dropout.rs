use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{AnticipationWindow, Model, ModelError};
use crate::autodiff::Tensor;
use crate::losses::entropy;

/// Monte Carlo dropout outputs at the final decoder step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McDropoutSummary {
    pub passes: usize,
    pub drop_rate: f64,
    /// `[pass][sample][class]`
    pub pass_probs: Vec<Vec<Vec<f64>>>,
    /// `[sample][class]`, averaged over passes
    pub mean_probs: Vec<Vec<f64>>,
    /// Entropy of the mean distribution, per sample.
    pub predictive_entropy: Vec<f64>,
    /// Predictive entropy minus mean per-pass entropy (mutual information),
    /// per sample.
    pub model_uncertainty: Vec<f64>,
}

impl McDropoutSummary {
    pub fn mean_model_uncertainty(&self) -> f64 {
        let n = self.model_uncertainty.len().max(1) as f64;
        self.model_uncertainty.iter().sum::<f64>() / n
    }
}

/// Repeats the forward pass with independent inverted-dropout masks on the
/// anticipated features.
pub fn mc_dropout_forward(
    model: &Model,
    streams: &[&[Vec<f64>]],
    window: &AnticipationWindow,
    passes: usize,
    drop_rate: f64,
    seed: u64,
) -> Result<McDropoutSummary, ModelError> {
    if passes < 2 {
        return Err(ModelError::Config(format!("passes {passes} < 2")));
    }
    if !(drop_rate > 0.0 && drop_rate < 1.0) {
        return Err(ModelError::Config(format!("drop rate {drop_rate} not in (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (b, h) = (streams.len(), model.config().hidden);
    let keep = 1.0 - drop_rate;
    let mut pass_probs = Vec::with_capacity(passes);
    for _ in 0..passes {
        let masks: Vec<Tensor> = (0..window.n_a())
            .map(|_| {
                let data = (0..b * h)
                    .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                Tensor::new(vec![b, h], data).expect("mask shape")
            })
            .collect();
        let preds = model.predict_masked(streams, window, Some(&masks))?;
        pass_probs.push(preds.into_iter().map(|p| p.last().probs.clone()).collect::<Vec<_>>());
    }
    let c = model.config().classes;
    let mut mean_probs = vec![vec![0.0; c]; b];
    for pass in &pass_probs {
        for (m, p) in mean_probs.iter_mut().zip(pass) {
            for (x, y) in m.iter_mut().zip(p) {
                *x += y / passes as f64;
            }
        }
    }
    let predictive_entropy: Vec<f64> = mean_probs.iter().map(|p| entropy(p)).collect();
    let model_uncertainty = (0..b)
        .map(|i| {
            let expected: f64 =
                pass_probs.iter().map(|pass| entropy(&pass[i])).sum::<f64>() / passes as f64;
            (predictive_entropy[i] - expected).max(0.0)
        })
        .collect();
    Ok(McDropoutSummary {
        passes,
        drop_rate,
        pass_probs,
        mean_probs,
        predictive_entropy,
        model_uncertainty,
    })
}
