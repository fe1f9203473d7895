//! Training objectives.
//!
//! The free functions here work on plain slices and serve as reference
//! implementations and for reporting; [`diff`] builds the same quantities
//! on an autodiff [`Graph`](crate::autodiff::Graph) for training.

pub mod diff;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labelspace::TargetLabel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("uncertainty must be positive, got {0}")]
    NonPositive(f64),
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("not a permutation of 0..{0}")]
    Permutation(usize),
    #[error("invalid hyperparameters: {0}")]
    HyperParams(String),
}

/// Label mass and loss weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl HyperParams {
    pub const PLAIN: HyperParams = HyperParams {
        alpha: 0.0,
        beta: 0.0,
        gamma: 0.0,
    };

    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self, LossError> {
        let hp = Self { alpha, beta, gamma };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<(), LossError> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(LossError::HyperParams(format!("alpha {} not in [0, 1)", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.gamma >= 0.0) {
            return Err(LossError::HyperParams(format!(
                "beta {} and gamma {} must be non-negative",
                self.beta, self.gamma
            )));
        }
        Ok(())
    }

    /// All three zero: training reduces to plain cross-entropy.
    pub fn is_plain(&self) -> bool {
        self.alpha == 0.0 && self.beta == 0.0 && self.gamma == 0.0
    }
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            alpha: 0.4,
            beta: 0.005,
            gamma: 5e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_srul: f64,
    pub l_trul: f64,
    pub l_wd: f64,
    pub beta: f64,
    pub gamma: f64,
    pub total: f64,
}

/// `softmax(logits / u_hat)`, max-shifted.
pub fn adjust_distribution(logits: &[f64], u_hat: f64) -> Result<Vec<f64>, LossError> {
    if !(u_hat > 0.0) {
        return Err(LossError::NonPositive(u_hat));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| ((l - max) / u_hat).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}

/// Shannon entropy in nats.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Cross-entropy of `probs` against a soft label.
pub fn anticipation_loss(probs: &[f64], label: &TargetLabel) -> Result<f64, LossError> {
    soft_cross_entropy(probs, label.probs())
}

pub fn soft_cross_entropy(probs: &[f64], label: &[f64]) -> Result<f64, LossError> {
    if probs.len() != label.len() {
        return Err(LossError::Length(probs.len(), label.len()));
    }
    Ok(-probs
        .iter()
        .zip(label)
        .filter(|(_, &y)| y > 0.0)
        .map(|(&p, &y)| y * p.ln())
        .sum::<f64>())
}

/// `u_k / sum(u)`.
pub fn relative_weights(u: &[f64]) -> Result<Vec<f64>, LossError> {
    if let Some(&bad) = u.iter().find(|&&x| !(x > 0.0)) {
        return Err(LossError::NonPositive(bad));
    }
    let s: f64 = u.iter().sum();
    Ok(u.iter().map(|&x| x / s).collect())
}

/// `sum_k w_k * f_k`.
pub fn mix_features(features: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>, LossError> {
    if features.len() != weights.len() {
        return Err(LossError::Length(features.len(), weights.len()));
    }
    let d = features.first().map_or(0, Vec::len);
    let mut out = vec![0.0; d];
    for (f, &w) in features.iter().zip(weights) {
        if f.len() != d {
            return Err(LossError::Length(f.len(), d));
        }
        for (o, &x) in out.iter_mut().zip(f) {
            *o += w * x;
        }
    }
    Ok(out)
}

/// One mixed pair: its adjusted distribution at each anticipation step and
/// the pair label.
#[derive(Debug, Clone)]
pub struct MixedPair {
    pub step_probs: Vec<Vec<f64>>,
    pub label: TargetLabel,
}

/// Mean over pairs of the per-step cross-entropy, averaged over steps.
pub fn srul_loss(pairs: &[MixedPair]) -> Result<f64, LossError> {
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for pair in pairs {
        let mut s = 0.0;
        for probs in &pair.step_probs {
            s += anticipation_loss(probs, &pair.label)?;
        }
        total += s / pair.step_probs.len().max(1) as f64;
    }
    Ok(total / pairs.len() as f64)
}

fn check_permutation(pi: &[usize]) -> Result<(), LossError> {
    let mut seen = vec![false; pi.len()];
    for &p in pi {
        if p >= pi.len() || seen[p] {
            return Err(LossError::Permutation(pi.len()));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Plackett-Luce probability of ranking `pi` with identity scores:
/// `pi[j]` is the member placed at rank `j`.
pub fn permutation_probability(u: &[f64], pi: &[usize]) -> Result<f64, LossError> {
    if u.len() != pi.len() {
        return Err(LossError::Length(u.len(), pi.len()));
    }
    check_permutation(pi)?;
    if let Some(&bad) = u.iter().find(|&&x| !(x > 0.0)) {
        return Err(LossError::NonPositive(bad));
    }
    let mut p = 1.0;
    for j in 0..pi.len() {
        let rest: f64 = pi[j..].iter().map(|&m| u[m]).sum();
        p *= u[pi[j]] / rest;
    }
    Ok(p)
}

/// `-sum_i log P(identity | U_i)`; families with fewer than two members are
/// skipped and counted.
pub fn trul_loss(families: &[Vec<f64>]) -> Result<(f64, usize), LossError> {
    let mut loss = 0.0;
    let mut skipped = 0;
    for u in families {
        if u.len() < 2 {
            skipped += 1;
            continue;
        }
        let ident: Vec<usize> = (0..u.len()).collect();
        loss -= permutation_probability(u, &ident)?.ln();
    }
    Ok((loss, skipped))
}

/// `sum u^2`.
pub fn wd_loss(u: &[f64]) -> f64 {
    u.iter().map(|x| x * x).sum()
}

pub fn total_loss(l_srul: f64, l_trul: f64, l_wd: f64, hp: &HyperParams) -> LossBreakdown {
    LossBreakdown {
        l_srul,
        l_trul,
        l_wd,
        beta: hp.beta,
        gamma: hp.gamma,
        total: l_srul + hp.beta * l_trul + hp.gamma * l_wd,
    }
}
