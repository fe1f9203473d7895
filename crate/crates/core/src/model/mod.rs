//! GRU encoder-decoder backbone with a class head and an uncertainty head.
//!
//! ```
//! use ubant::model::{AnticipationWindow, Model, ModelConfig};
//!
//! let cfg = ModelConfig { feat_dim: 4, hidden: 8, classes: 5, ..ModelConfig::default() };
//! let model = Model::new(cfg, 7).unwrap();
//! let window = AnticipationWindow::new(1.5, 2.0, 0.25).unwrap();
//! let stream = vec![vec![0.1; 4]; window.n_o()];
//! let preds = model.predict(&[&stream[..]], &window).unwrap();
//! assert_eq!(preds[0].steps.len(), 8);
//! assert!(preds[0].last().u > 0.0);
//! ```

mod backbone;
mod checkpoint;
mod dropout;

pub use backbone::{Backbone, GruGru};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use dropout::{mc_dropout_forward, McDropoutSummary};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Graph, Tensor, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("invalid window: {0}")]
    Window(String),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("input {what}: expected {expected}, got {got}")]
    Input {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("parameter {name}: checkpoint shape {found:?}, config expects {expected:?}")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
}

/// How the uncertainty vector is reduced to one temperature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Mean,
    Max,
    Min,
}

impl std::str::FromStr for Pooling {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mean" => Ok(Self::Mean),
            "max" => Ok(Self::Max),
            "min" => Ok(Self::Min),
            other => Err(format!("unknown pooling {other:?}")),
        }
    }
}

impl Pooling {
    pub fn apply(self, v: &[f64]) -> f64 {
        match self {
            Self::Mean => v.iter().sum::<f64>() / v.len() as f64,
            Self::Max => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Self::Min => v.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

/// Observation and anticipation spans in seconds, both multiples of `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnticipationWindow {
    pub tau_o: f64,
    pub tau_a: f64,
    pub delta: f64,
}

fn snippets(span: f64, delta: f64, what: &str) -> Result<usize, ModelError> {
    let n = (span / delta).round();
    if n < 1.0 || (n * delta - span).abs() > 1e-9 {
        return Err(ModelError::Window(format!(
            "{what} {span}s is not a positive multiple of {delta}s"
        )));
    }
    Ok(n as usize)
}

impl AnticipationWindow {
    pub fn new(tau_o: f64, tau_a: f64, delta: f64) -> Result<Self, ModelError> {
        if !(delta > 0.0) {
            return Err(ModelError::Window(format!("delta {delta} must be positive")));
        }
        snippets(tau_o, delta, "tau_o")?;
        snippets(tau_a, delta, "tau_a")?;
        Ok(Self { tau_o, tau_a, delta })
    }

    pub fn n_o(&self) -> usize {
        (self.tau_o / self.delta).round() as usize
    }

    pub fn n_a(&self) -> usize {
        (self.tau_a / self.delta).round() as usize
    }

    /// Horizon tag of decoder step `k` (1-based): `tau_a - (k - 1) * delta`.
    pub fn step_horizon(&self, k: usize) -> f64 {
        self.tau_a - (k as f64 - 1.0) * self.delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub feat_dim: usize,
    pub hidden: usize,
    pub classes: usize,
    pub pooling: Pooling,
    pub u_floor: f64,
    pub u_ceiling: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            feat_dim: 16,
            hidden: 64,
            classes: 20,
            pooling: Pooling::Mean,
            u_floor: 0.1,
            u_ceiling: 10.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.feat_dim == 0 || self.hidden == 0 || self.classes < 2 {
            return Err(ModelError::Config(format!(
                "feat_dim {}, hidden {}, classes {}",
                self.feat_dim, self.hidden, self.classes
            )));
        }
        if !(self.u_floor > 0.0 && self.u_ceiling > self.u_floor) {
            return Err(ModelError::Config(format!(
                "uncertainty bounds [{}, {}]",
                self.u_floor, self.u_ceiling
            )));
        }
        Ok(())
    }

    /// `(name, shape, fan_in)` of every parameter, in storage order.
    pub fn param_specs(&self) -> Vec<(&'static str, Vec<usize>, usize)> {
        let (f, h, c) = (self.feat_dim, self.hidden, self.classes);
        vec![
            ("enc.wx", vec![f, 3 * h], f),
            ("enc.wh", vec![h, 3 * h], h),
            ("enc.b", vec![1, 3 * h], h),
            ("dec.wx", vec![h, 3 * h], h),
            ("dec.wh", vec![h, 3 * h], h),
            ("dec.b", vec![1, 3 * h], h),
            ("head_c.w", vec![h, c], h),
            ("head_c.b", vec![1, c], h),
            ("head_u.w", vec![h, c], h),
            ("head_u.b", vec![1, c], h),
        ]
    }
}

/// Configuration plus parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    names: Vec<String>,
    params: Vec<Tensor>,
}

/// Indices into [`Bound::vars`].
pub(crate) mod slot {
    pub const ENC_WX: usize = 0;
    pub const ENC_WH: usize = 1;
    pub const ENC_B: usize = 2;
    pub const DEC_WX: usize = 3;
    pub const DEC_WH: usize = 4;
    pub const DEC_B: usize = 5;
    pub const HEAD_C_W: usize = 6;
    pub const HEAD_C_B: usize = 7;
    pub const HEAD_U_W: usize = 8;
    pub const HEAD_U_B: usize = 9;
}

/// Model parameters placed on a graph.
#[derive(Debug, Clone)]
pub struct Bound {
    pub vars: Vec<Var>,
    pub config: ModelConfig,
}

/// Head outputs for a batch of features `[N, hidden]`.
#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    /// `[N, C]`
    pub logits: Var,
    /// `[N, C]`, positive
    pub u_vec: Var,
    /// `[N, 1]`, pooled and clamped
    pub u: Var,
}

/// Output of one decoder step for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub logits: Vec<f64>,
    pub u: f64,
    /// `softmax(logits / u)`
    pub probs: Vec<f64>,
}

/// All decoder-step outputs for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub steps: Vec<StepOutput>,
}

impl Prediction {
    pub fn last(&self) -> &StepOutput {
        self.steps.last().expect("at least one step")
    }
}

impl Model {
    /// Parameters drawn uniformly from `±1/sqrt(fan_in)`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        let mut params = Vec::new();
        for (name, shape, fan_in) in config.param_specs() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
            names.push(name.to_string());
            params.push(Tensor::new(shape, data)?);
        }
        Ok(Self {
            config,
            names,
            params,
        })
    }

    /// Builds a model from named tensors, checking every name and shape.
    pub fn from_params(
        config: ModelConfig,
        named: Vec<(String, Tensor)>,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let specs = config.param_specs();
        if named.len() != specs.len() {
            return Err(ModelError::Checkpoint(format!(
                "{} parameter blocks, expected {}",
                named.len(),
                specs.len()
            )));
        }
        let mut names = Vec::new();
        let mut params = Vec::new();
        for ((name, shape, _), (got_name, t)) in specs.into_iter().zip(named) {
            if name != got_name {
                return Err(ModelError::Checkpoint(format!(
                    "block {got_name:?} where {name:?} was expected"
                )));
            }
            if t.shape() != shape.as_slice() {
                return Err(ModelError::ParamShape {
                    name: got_name,
                    expected: shape,
                    found: t.shape().to_vec(),
                });
            }
            names.push(got_name);
            params.push(t);
        }
        Ok(Self {
            config,
            names,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.params[i])
    }

    /// Class-head weights as `[C, hidden]` rows.
    pub fn classifier_rows(&self) -> Vec<Vec<f64>> {
        let w = &self.params[slot::HEAD_C_W];
        let (h, c) = (w.shape()[0], w.shape()[1]);
        (0..c)
            .map(|j| (0..h).map(|i| w.data()[i * c + j]).collect())
            .collect()
    }

    /// Places the parameters on `g`, as trainable leaves or constants.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|t| {
                if trainable {
                    g.param(t.clone())
                } else {
                    g.constant(t.clone())
                }
            })
            .collect();
        Bound {
            vars,
            config: self.config,
        }
    }

    /// Runs the backbone and heads on a batch of observed streams; the
    /// first `window.n_o()` snippets of each stream are encoded and the
    /// decoder unrolls `window.n_a()` steps.
    pub fn predict(
        &self,
        streams: &[&[Vec<f64>]],
        window: &AnticipationWindow,
    ) -> Result<Vec<Prediction>, ModelError> {
        self.predict_masked(streams, window, None)
    }

    pub(crate) fn predict_masked(
        &self,
        streams: &[&[Vec<f64>]],
        window: &AnticipationWindow,
        masks: Option<&[Tensor]>,
    ) -> Result<Vec<Prediction>, ModelError> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let inputs = batch_inputs(&mut g, streams, window.n_o(), self.config.feat_dim)?;
        let trace = GruGru.encode(&mut g, &p, &inputs)?;
        let state = *trace.last().expect("n_o >= 1");
        let feats = GruGru.decode(&mut g, &p, state, window.n_a())?;
        let mut out: Vec<Prediction> = (0..streams.len())
            .map(|_| Prediction { steps: Vec::new() })
            .collect();
        for (k, &f) in feats.iter().enumerate() {
            let f = match masks {
                Some(m) => {
                    let mv = g.constant(m[k].clone());
                    g.mul(f, mv)?
                }
                None => f,
            };
            let heads = dual_heads(&mut g, &p, f)?;
            let c = self.config.classes;
            let logits = g.value(heads.logits).data().to_vec();
            let us = g.value(heads.u).data().to_vec();
            for (b, pred) in out.iter_mut().enumerate() {
                let l = logits[b * c..(b + 1) * c].to_vec();
                let probs = crate::losses::adjust_distribution(&l, us[b])
                    .expect("pooled uncertainty is positive");
                pred.steps.push(StepOutput {
                    logits: l,
                    u: us[b],
                    probs,
                });
            }
        }
        Ok(out)
    }
}

/// Per-timestep `[B, d]` constants from the first `len` snippets of each
/// stream.
pub fn batch_inputs(
    g: &mut Graph,
    streams: &[&[Vec<f64>]],
    len: usize,
    dim: usize,
) -> Result<Vec<Var>, ModelError> {
    let b = streams.len();
    if b == 0 {
        return Err(ModelError::Input {
            what: "batch size",
            expected: 1,
            got: 0,
        });
    }
    for s in streams {
        if s.len() < len {
            return Err(ModelError::Input {
                what: "observed length",
                expected: len,
                got: s.len(),
            });
        }
        if let Some(bad) = s[..len].iter().find(|f| f.len() != dim) {
            return Err(ModelError::Input {
                what: "feature dimension",
                expected: dim,
                got: bad.len(),
            });
        }
    }
    (0..len)
        .map(|t| {
            let mut data = Vec::with_capacity(b * dim);
            for s in streams {
                data.extend_from_slice(&s[t]);
            }
            Ok(g.constant(Tensor::new(vec![b, dim], data)?))
        })
        .collect()
}

/// Class logits and the pooled, clamped uncertainty for features `[N, h]`.
/// The uncertainty vector is `softplus(raw) + u_floor`.
pub fn dual_heads(g: &mut Graph, p: &Bound, feature: Var) -> Result<HeadVars, AutodiffError> {
    let cfg = p.config;
    let lw = g.matmul(feature, p.vars[slot::HEAD_C_W])?;
    let logits = g.add(lw, p.vars[slot::HEAD_C_B])?;
    let uw = g.matmul(feature, p.vars[slot::HEAD_U_W])?;
    let raw = g.add(uw, p.vars[slot::HEAD_U_B])?;
    let sp = g.softplus(raw);
    let u_vec = g.offset(sp, cfg.u_floor);
    let pooled = match cfg.pooling {
        Pooling::Mean => g.mean_axis(u_vec, 1)?,
        Pooling::Max => g.max_axis(u_vec, 1)?,
        Pooling::Min => g.min_axis(u_vec, 1)?,
    };
    let u = g.clamp(pooled, cfg.u_floor, cfg.u_ceiling);
    Ok(HeadVars { logits, u_vec, u })
}

#[cfg(test)]
mod tests;
