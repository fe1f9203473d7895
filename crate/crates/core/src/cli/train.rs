//! Mini-batch SGD over ranking families.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use super::config::{sub_seed, TrainConfig};
use crate::autodiff::{AutodiffError, Graph, Tensor, Var};
use crate::data::{pair_batches, DataError, FamilySample, FeatureStore};
use crate::labelspace::{LabelError, LabelSpace};
use crate::losses::{diff, LossBreakdown};
use crate::model::{batch_inputs, dual_heads, Backbone, Bound, GruGru, Model, ModelError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error("no training families")]
    Empty,
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepLog {
    pub epoch: usize,
    pub step: usize,
    pub l_srul: f64,
    pub l_trul: f64,
    pub l_wd: f64,
    pub total: f64,
    pub mean_u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub batches: usize,
    pub mean_total: f64,
    pub mean_srul: f64,
    pub mean_trul: f64,
    pub mean_u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochSummary>,
    pub steps: usize,
    /// Batches in which no pair of distinct classes could be formed.
    pub empty_batches: usize,
}

/// Holds the model being trained and the optimizer state.
pub struct Trainer<'a> {
    cfg: TrainConfig,
    model: Model,
    velocity: Vec<Tensor>,
    families: &'a [FamilySample],
    store: &'a FeatureStore,
    labels: &'a LabelSpace,
}

struct BatchLoss {
    total: Var,
    srul: Var,
    trul: Option<Var>,
    wd: Option<Var>,
    mean_u: f64,
}

impl<'a> Trainer<'a> {
    pub fn new(
        cfg: &TrainConfig,
        model: Model,
        families: &'a [FamilySample],
        store: &'a FeatureStore,
        labels: &'a LabelSpace,
    ) -> Result<Self, TrainError> {
        if families.is_empty() {
            return Err(TrainError::Empty);
        }
        let velocity = model.params().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Ok(Self {
            cfg: cfg.clone(),
            model,
            velocity,
            families,
            store,
            labels,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    fn mixing(&self) -> bool {
        self.cfg.mix && !self.cfg.hyper_params().is_plain()
    }

    /// Row groups of one epoch. With mixing, the first half of a group is
    /// paired element-wise with the second half.
    fn epoch_batches(&self, epoch: usize) -> Result<(Vec<Vec<usize>>, usize), TrainError> {
        let seed = sub_seed(self.cfg.seed, "batches").wrapping_add(epoch as u64);
        if self.mixing() {
            let targets: Vec<usize> = self.families.iter().map(|f| f.target).collect();
            let stream = pair_batches(&targets, self.cfg.batch_size, seed)?;
            let rows = stream
                .batches
                .into_iter()
                .map(|b| {
                    let (i, j): (Vec<usize>, Vec<usize>) = b.pairs.into_iter().unzip();
                    i.into_iter().chain(j).collect()
                })
                .collect();
            Ok((rows, stream.empty_batches))
        } else {
            let mut order: Vec<usize> = (0..self.families.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            Ok((order.chunks(self.cfg.batch_size).map(<[usize]>::to_vec).collect(), 0))
        }
    }

    fn label_rows(&self, rows: &[usize]) -> Result<Tensor, TrainError> {
        let c = self.labels.classes();
        let plain = self.cfg.hyper_params().is_plain();
        let mut data = Vec::new();
        if self.mixing() {
            let p = rows.len() / 2;
            for k in 0..p {
                let (ci, cj) = (self.families[rows[k]].target, self.families[rows[p + k]].target);
                data.extend_from_slice(self.labels.pair(ci, cj)?.probs());
            }
            return Ok(Tensor::new(vec![p, c], data).map_err(AutodiffError::from)?);
        }
        for &r in rows {
            let t = self.families[r].target;
            if plain {
                let mut one = vec![0.0; c];
                one[t] = 1.0;
                data.extend(one);
            } else {
                data.extend_from_slice(self.labels.single(t)?.probs());
            }
        }
        Ok(Tensor::new(vec![rows.len(), c], data).map_err(AutodiffError::from)?)
    }

    fn forward(&self, g: &mut Graph, p: &Bound, rows: &[usize]) -> Result<BatchLoss, TrainError> {
        let hp = self.cfg.hyper_params();
        let plain = hp.is_plain();
        let adjust = self.cfg.adjust && !plain;
        let labels = self.label_rows(rows)?;
        let streams: Vec<&[Vec<f64>]> = rows.iter().map(|&r| self.families[r].stream(self.store)).collect();
        let len = streams[0].len();
        let inputs = batch_inputs(g, &streams, len, self.store.dim())?;
        let trace = GruGru.encode(g, p, &inputs)?;
        let members = &self.families[rows[0]].members;
        let half = rows.len() / 2;

        let mut ce_terms = Vec::new();
        // Per member, pooled uncertainty at every step.
        let mut member_u: Vec<Vec<Var>> = Vec::new();
        let mut wd_terms = Vec::new();
        let mut u_sum = 0.0;
        let mut u_count = 0usize;
        for w in members {
            let feats = GruGru.decode(g, p, trace[w.n_o() - 1], w.n_a())?;
            member_u.push(Vec::with_capacity(feats.len()));
            for &f in &feats {
                let heads = dual_heads(g, p, f)?;
                u_sum += g.value(heads.u).data().iter().sum::<f64>();
                u_count += rows.len();
                if hp.gamma > 0.0 {
                    wd_terms.push(diff::wd(g, heads.u));
                }
                member_u.last_mut().expect("pushed above").push(heads.u);
                let log_probs = if self.mixing() {
                    let fi = g.slice(f, 0, 0, half)?;
                    let fj = g.slice(f, 0, half, half)?;
                    let ui = g.slice(heads.u, 0, 0, half)?;
                    let uj = g.slice(heads.u, 0, half, half)?;
                    let ws = diff::relative_weights(g, &[ui, uj])?;
                    let mixed = diff::mix_features(g, &[fi, fj], &ws)?;
                    let mh = dual_heads(g, p, mixed)?;
                    if adjust {
                        diff::adjusted_log_probs(g, mh.logits, mh.u)?
                    } else {
                        g.log_softmax(mh.logits, 1)?
                    }
                } else if adjust {
                    diff::adjusted_log_probs(g, heads.logits, heads.u)?
                } else {
                    g.log_softmax(heads.logits, 1)?
                };
                ce_terms.push(diff::soft_cross_entropy(g, log_probs, &labels)?);
            }
        }
        let n_terms = ce_terms.len();
        let mut srul = ce_terms[0];
        for &t in &ce_terms[1..] {
            srul = g.add(srul, t)?;
        }
        let srul = g.scale(srul, 1.0 / n_terms as f64);
        // Steps counted back from the target are shared by all members;
        // each shared step yields one ranking family per row.
        let shared = member_u.iter().map(Vec::len).min().unwrap_or(0);
        let trul = if hp.beta > 0.0 && member_u.len() >= 2 && shared > 0 {
            let mut acc = None;
            for j in 0..shared {
                let cols: Vec<Var> = member_u.iter().map(|us| us[us.len() - 1 - j]).collect();
                let u = g.concat(&cols, 1)?;
                let t = diff::trul(g, u)?;
                acc = Some(match acc {
                    Some(a) => g.add(a, t)?,
                    None => t,
                });
            }
            Some(g.scale(acc.expect("shared > 0"), 1.0 / shared as f64))
        } else {
            None
        };
        let wd = if wd_terms.is_empty() {
            None
        } else {
            let mut acc = wd_terms[0];
            for &t in &wd_terms[1..] {
                acc = g.add(acc, t)?;
            }
            Some(acc)
        };
        let total = diff::total(g, srul, trul, wd, hp.beta, hp.gamma)?;
        Ok(BatchLoss {
            total,
            srul,
            trul,
            wd,
            mean_u: u_sum / u_count.max(1) as f64,
        })
    }

    /// Loss of one batch without updating the model.
    pub fn batch_loss(&self, rows: &[usize]) -> Result<LossBreakdown, TrainError> {
        let mut g = Graph::new();
        let p = self.model.bind(&mut g, false);
        let loss = self.forward(&mut g, &p, rows)?;
        Ok(self.breakdown(&g, &loss))
    }

    fn breakdown(&self, g: &Graph, loss: &BatchLoss) -> LossBreakdown {
        let hp = self.cfg.hyper_params();
        LossBreakdown {
            l_srul: g.scalar(loss.srul),
            l_trul: loss.trul.map_or(0.0, |v| g.scalar(v)),
            l_wd: loss.wd.map_or(0.0, |v| g.scalar(v)),
            beta: hp.beta,
            gamma: hp.gamma,
            total: g.scalar(loss.total),
        }
    }

    /// One SGD step; the model is left untouched when the loss is not finite.
    fn step(&mut self, rows: &[usize]) -> Result<Option<(LossBreakdown, f64)>, TrainError> {
        let mut g = Graph::new();
        let p = self.model.bind(&mut g, true);
        let loss = self.forward(&mut g, &p, rows)?;
        let parts = self.breakdown(&g, &loss);
        if !parts.total.is_finite() {
            return Ok(None);
        }
        let grads = g.backward(loss.total)?;
        let grads: Vec<&Tensor> = p.vars.iter().map(|&v| grads.wrt(v)).collect();
        if grads.iter().any(|t| !t.all_finite()) {
            return Ok(None);
        }
        let norm = grads
            .iter()
            .flat_map(|t| t.data())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt();
        let scale = if self.cfg.grad_clip > 0.0 && norm > self.cfg.grad_clip {
            self.cfg.grad_clip / norm
        } else {
            1.0
        };
        let (lr, mu, wd) = (self.cfg.lr, self.cfg.momentum, self.cfg.weight_decay);
        for ((theta, v), grad) in self
            .model
            .params_mut()
            .iter_mut()
            .zip(&mut self.velocity)
            .zip(grads)
        {
            let th = theta.data_mut();
            for ((x, vel), &gr) in th.iter_mut().zip(v.data_mut()).zip(grad.data()) {
                *vel = mu * *vel + gr * scale + wd * *x;
                *x -= lr * *vel;
            }
        }
        Ok(Some((parts, loss.mean_u)))
    }

    /// Runs all epochs, reporting every step to `on_step` and the model after
    /// every epoch to `on_epoch`.
    pub fn run(
        &mut self,
        mut on_step: impl FnMut(&StepLog),
        mut on_epoch: impl FnMut(&EpochSummary, &Model) -> Result<(), TrainError>,
    ) -> Result<TrainReport, TrainError> {
        let mut report = TrainReport {
            epochs: Vec::new(),
            steps: 0,
            empty_batches: 0,
        };
        for epoch in 0..self.cfg.epochs {
            let (batches, empty) = self.epoch_batches(epoch)?;
            report.empty_batches += empty;
            let mut sums = [0.0; 4];
            for (batch, rows) in batches.iter().enumerate() {
                let (parts, mean_u) = self
                    .step(rows)?
                    .ok_or(TrainError::NonFinite { epoch, batch })?;
                let log = StepLog {
                    epoch,
                    step: report.steps,
                    l_srul: parts.l_srul,
                    l_trul: parts.l_trul,
                    l_wd: parts.l_wd,
                    total: parts.total,
                    mean_u,
                };
                on_step(&log);
                report.steps += 1;
                sums[0] += parts.total;
                sums[1] += parts.l_srul;
                sums[2] += parts.l_trul;
                sums[3] += mean_u;
            }
            let n = batches.len().max(1) as f64;
            let summary = EpochSummary {
                epoch,
                batches: batches.len(),
                mean_total: sums[0] / n,
                mean_srul: sums[1] / n,
                mean_trul: sums[2] / n,
                mean_u: sums[3] / n,
            };
            on_epoch(&summary, &self.model)?;
            report.epochs.push(summary);
        }
        Ok(report)
    }
}
