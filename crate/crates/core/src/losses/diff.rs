//! Differentiable versions of the objectives. Rows are samples.

use crate::autodiff::{AutodiffError, Graph, Tensor, Var};

type Result<T> = std::result::Result<T, AutodiffError>;

/// `log_softmax(logits / u)` for logits `[N, C]` and temperatures `[N, 1]`.
pub fn adjusted_log_probs(g: &mut Graph, logits: Var, u: Var) -> Result<Var> {
    let scaled = g.div(logits, u)?;
    g.log_softmax(scaled, 1)
}

/// Mean over rows of `-sum_j y_j log p_j` against constant labels `[N, C]`.
pub fn soft_cross_entropy(g: &mut Graph, log_probs: Var, labels: &Tensor) -> Result<Var> {
    let rows = labels.shape()[0].max(1);
    let y = g.constant(labels.clone());
    let prod = g.mul(log_probs, y)?;
    let s = g.sum(prod);
    Ok(g.scale(s, -1.0 / rows as f64))
}

/// `u_k / sum_k u_k` elementwise over equally shaped inputs.
pub fn relative_weights(g: &mut Graph, u: &[Var]) -> Result<Vec<Var>> {
    let mut total = *u
        .first()
        .ok_or_else(|| AutodiffError::Invalid("relative_weights of nothing".into()))?;
    for &x in &u[1..] {
        total = g.add(total, x)?;
    }
    u.iter().map(|&x| g.div(x, total)).collect()
}

/// `sum_k w_k * f_k` for features `[N, d]` and weights `[N, 1]`.
pub fn mix_features(g: &mut Graph, features: &[Var], weights: &[Var]) -> Result<Var> {
    if features.len() != weights.len() || features.is_empty() {
        return Err(AutodiffError::Invalid(format!(
            "{} features vs {} weights",
            features.len(),
            weights.len()
        )));
    }
    let mut acc = g.mul(features[0], weights[0])?;
    for (&f, &w) in features.iter().zip(weights).skip(1) {
        let t = g.mul(f, w)?;
        acc = g.add(acc, t)?;
    }
    Ok(acc)
}

/// `[M, M]` matrix with ones where `row >= col`, so `U * T` gives suffix
/// sums along each row of `U`.
fn suffix_matrix(m: usize) -> Tensor {
    let mut t = Tensor::zeros(&[m, m]);
    for r in 0..m {
        for c in 0..=r {
            t.data_mut()[r * m + c] = 1.0;
        }
    }
    t
}

/// Ranking loss summed over families. `u` is `[F, M]`, each row ordered so
/// the ideal ranking is the identity.
pub fn trul(g: &mut Graph, u: Var) -> Result<Var> {
    let m = g.shape(u)[1];
    let t = g.constant(suffix_matrix(m));
    let suffix = g.matmul(u, t)?;
    let log_suffix = g.log(suffix);
    let log_u = g.log(u);
    let a = g.sum(log_suffix);
    let b = g.sum(log_u);
    g.sub(a, b)
}

/// `sum u^2`.
pub fn wd(g: &mut Graph, u: Var) -> Var {
    let sq = g.square(u);
    g.sum(sq)
}

/// `srul + beta * trul + gamma * wd`, skipping zero-weighted terms.
pub fn total(g: &mut Graph, srul: Var, trul: Option<Var>, wd: Option<Var>, beta: f64, gamma: f64) -> Result<Var> {
    let mut acc = srul;
    if let (Some(t), true) = (trul, beta > 0.0) {
        let s = g.scale(t, beta);
        acc = g.add(acc, s)?;
    }
    if let (Some(w), true) = (wd, gamma > 0.0) {
        let s = g.scale(w, gamma);
        acc = g.add(acc, s)?;
    }
    Ok(acc)
}
