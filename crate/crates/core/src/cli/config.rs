use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;
use crate::data::FamilyGeometry;
use crate::losses::HyperParams;
use crate::model::Pooling;

/// Training and evaluation settings. Every field has a default from the
/// desk-scale profile; a config file only lists the keys it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub hidden: usize,
    pub pooling: Pooling,
    /// Observation plus anticipation length of every training window.
    pub span: f64,
    pub delta: f64,
    /// Anticipation times of the members of one ranking family, largest
    /// first.
    pub tau_a_grid: Vec<f64>,
    /// Anticipation times reported by evaluation.
    pub eval_tau_a: Vec<f64>,
    /// Keep only the highest-scoring co-occurring classes; 0 keeps all.
    pub top_k: usize,
    pub use_internal: bool,
    pub use_external: bool,
    /// Mix pairs of samples by relative uncertainty.
    pub mix: bool,
    /// Divide logits by the pooled uncertainty.
    pub adjust: bool,
    /// Global gradient-norm cap; 0 disables it.
    pub grad_clip: f64,
    pub eval: EvalOptions,
}

/// Settings of the evaluation reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    /// Anticipation time of the single-horizon reports.
    pub report_tau_a: f64,
    pub many_shot: usize,
    pub rejection: Vec<f64>,
    pub noise: Vec<f64>,
    pub bins: usize,
    /// Size of the leading partition of ranked class pairs.
    pub top_pairs: usize,
    pub passes: usize,
    pub drop_rate: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            report_tau_a: 1.0,
            many_shot: 10,
            rejection: vec![0.0, 0.1, 0.2, 0.3],
            noise: vec![0.0, 1.0, 5.0, 10.0],
            bins: 10,
            top_pairs: 20,
            passes: 50,
            drop_rate: 0.3,
        }
    }
}

impl EvalOptions {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        if self.many_shot == 0 || self.bins < 2 || self.top_pairs == 0 || self.passes < 2 {
            return bad(format!(
                "many_shot {} bins {} top_pairs {} passes {}",
                self.many_shot, self.bins, self.top_pairs, self.passes
            ));
        }
        if !(self.drop_rate > 0.0 && self.drop_rate < 1.0) {
            return bad(format!("drop_rate {} not in (0, 1)", self.drop_rate));
        }
        if self.noise.iter().any(|&e| !(e >= 0.0)) {
            return bad(format!("noise intensities {:?}", self.noise));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    pub fn desk() -> Self {
        Self {
            alpha: 0.4,
            beta: 0.005,
            gamma: 5e-6,
            lr: 0.05,
            momentum: 0.9,
            weight_decay: 5e-5,
            batch_size: 32,
            epochs: 10,
            seed: 0,
            hidden: 64,
            pooling: Pooling::Mean,
            span: 3.5,
            delta: 0.25,
            tau_a_grid: vec![2.0, 1.5, 1.0, 0.5],
            eval_tau_a: vec![2.0, 1.75, 1.5, 1.25, 1.0, 0.75, 0.5, 0.25],
            top_k: 0,
            use_internal: true,
            use_external: true,
            mix: true,
            adjust: true,
            grad_clip: 5.0,
            eval: EvalOptions::default(),
        }
    }

    /// Optimizer and batch settings of the full-scale recipe.
    pub fn full() -> Self {
        Self {
            batch_size: 128,
            epochs: 100,
            ..Self::desk()
        }
    }

    pub fn profile(name: &str) -> Result<Self, CliError> {
        match name {
            "desk" => Ok(Self::desk()),
            "full" => Ok(Self::full()),
            other => Err(CliError::Usage(format!("unknown profile {other:?}"))),
        }
    }

    /// The same settings with the uncertainty terms switched off.
    pub fn plain(&self) -> Self {
        Self {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            ..self.clone()
        }
    }

    pub fn hyper_params(&self) -> HyperParams {
        HyperParams {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
        }
    }

    pub fn geometry(&self) -> FamilyGeometry {
        FamilyGeometry {
            span: self.span,
            delta: self.delta,
            tau_a_grid: self.tau_a_grid.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.hyper_params()
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 {
            return Err(CliError::Usage(format!(
                "optimizer lr {} momentum {} weight_decay {}",
                self.lr, self.momentum, self.weight_decay
            )));
        }
        if self.batch_size < 2 || self.epochs == 0 || self.hidden == 0 {
            return Err(CliError::Usage(format!(
                "batch_size {} epochs {} hidden {}",
                self.batch_size, self.epochs, self.hidden
            )));
        }
        self.geometry()
            .windows()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        for &t in self.eval_tau_a.iter().chain([&self.eval.report_tau_a]) {
            self.geometry()
                .window(t)
                .map_err(|e| CliError::Usage(e.to_string()))?;
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    /// Reads a key-value config file over the given base profile.
    pub fn load(path: &Path, base: &Self) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let overrides: toml::Table =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let mut merged = toml::Table::try_from(base).expect("config serialises");
        merged.extend(overrides);
        merged
            .try_into()
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

/// Deterministic per-purpose seed derived from the run seed.
pub fn sub_seed(seed: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}
