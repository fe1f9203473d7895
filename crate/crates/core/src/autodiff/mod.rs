//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] is built per forward pass: every operation appends a node
//! holding its value, so creation order is a topological order and
//! [`Graph::backward`] is a single reverse sweep.
//!
//! ```
//! use ubant::autodiff::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.param(Tensor::vector(vec![1.0, 2.0]));
//! let sq = g.square(x);
//! let y = g.sum(sq);
//! let grads = g.backward(y).unwrap();
//! assert_eq!(grads.wrt(x).data(), &[2.0, 4.0]);
//! ```
//!
//! [`grad_check`] compares the analytic gradient against central finite
//! differences of the same forward function.

mod graph;
mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {shapes:?}")]
    Shape {
        op: &'static str,
        shapes: Vec<Vec<usize>>,
    },
    #[error("shape {shape:?} does not match data length {len}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("backward needs a one-element root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("non-finite loss at probe input {input}, coordinate {index}")]
    NonFinite { input: usize, index: usize },
    #[error("finite-difference step must be positive, got {0}")]
    BadStep(f64),
    #[error("{0}")]
    Invalid(String),
}

/// Outcome of [`grad_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max(1, |analytic|)` over all coordinates.
    pub max_rel_error: f64,
    /// `(input, flat index)` of the worst coordinate.
    pub worst: (usize, usize),
    pub coordinates: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

/// Checks the gradient of a scalar function of several tensors.
///
/// `loss_fn` receives a fresh graph and one `param` leaf per entry of
/// `point`, and must return a one-element node. The analytic gradient comes
/// from [`Graph::backward`]; the numeric one from central differences with
/// spacing `step`, evaluated by re-running `loss_fn` on perturbed copies.
pub fn grad_check<F>(
    loss_fn: F,
    point: &[Tensor],
    step: f64,
    tol: f64,
) -> Result<GradCheckReport, AutodiffError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, AutodiffError>,
{
    if !(step > 0.0) {
        return Err(AutodiffError::BadStep(step));
    }
    let eval = |inputs: &[Tensor]| -> Result<f64, AutodiffError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
        let root = loss_fn(&mut g, &vars)?;
        Ok(g.scalar(root))
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = point.iter().map(|t| g.param(t.clone())).collect();
    let root = loss_fn(&mut g, &vars)?;
    if !g.scalar(root).is_finite() {
        return Err(AutodiffError::NonFinite { input: 0, index: 0 });
    }
    let grads = g.backward(root)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        coordinates: 0,
        tolerance: tol,
    };
    let mut probe: Vec<Tensor> = point.to_vec();
    for (input, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(*var).data().to_vec();
        for (index, &a) in analytic.iter().enumerate() {
            let orig = probe[input].data()[index];
            probe[input].data_mut()[index] = orig + step;
            let plus = eval(&probe)?;
            probe[input].data_mut()[index] = orig - step;
            let minus = eval(&probe)?;
            probe[input].data_mut()[index] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(AutodiffError::NonFinite { input, index });
            }
            let numeric = (plus - minus) / (2.0 * step);
            let err = (a - numeric).abs() / a.abs().max(1.0);
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (input, index);
            }
            report.coordinates += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests;
