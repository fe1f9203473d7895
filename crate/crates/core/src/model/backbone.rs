use super::{slot, Bound};
use crate::autodiff::{AutodiffError, Graph, Var};

/// Maps observed snippet features to anticipated features.
pub trait Backbone {
    /// Hidden state after each observed snippet; inputs are `[B, feat_dim]`.
    fn encode(&self, g: &mut Graph, p: &Bound, inputs: &[Var]) -> Result<Vec<Var>, AutodiffError>;

    /// One anticipated feature `[B, hidden]` per decoder step, starting from
    /// an encoder state.
    fn decode(&self, g: &mut Graph, p: &Bound, state: Var, steps: usize)
        -> Result<Vec<Var>, AutodiffError>;
}

/// Single-layer GRU encoder and GRU decoder. The decoder is fed its own
/// previous output.
#[derive(Debug, Clone, Copy, Default)]
pub struct GruGru;

/// `h' = (1 - z) * n + z * h` with
/// `z, r = sigmoid(x Wx + b + h Wh)` and `n = tanh(x Wx_n + b_n + r * (h Wh_n))`.
pub(crate) fn gru_step(
    g: &mut Graph,
    x: Var,
    h: Var,
    wx: Var,
    wh: Var,
    b: Var,
) -> Result<Var, AutodiffError> {
    let hidden = g.shape(h)[1];
    let xw = g.matmul(x, wx)?;
    let gx = g.add(xw, b)?;
    let gh = g.matmul(h, wh)?;
    let gx_zr = g.slice(gx, 1, 0, 2 * hidden)?;
    let gh_zr = g.slice(gh, 1, 0, 2 * hidden)?;
    let pre = g.add(gx_zr, gh_zr)?;
    let zr = g.sigmoid(pre);
    let z = g.slice(zr, 1, 0, hidden)?;
    let r = g.slice(zr, 1, hidden, hidden)?;
    let gx_n = g.slice(gx, 1, 2 * hidden, hidden)?;
    let gh_n = g.slice(gh, 1, 2 * hidden, hidden)?;
    let rh = g.mul(r, gh_n)?;
    let npre = g.add(gx_n, rh)?;
    let n = g.tanh(npre);
    let diff = g.sub(h, n)?;
    let zd = g.mul(z, diff)?;
    g.add(n, zd)
}

impl Backbone for GruGru {
    fn encode(&self, g: &mut Graph, p: &Bound, inputs: &[Var]) -> Result<Vec<Var>, AutodiffError> {
        let first = *inputs
            .first()
            .ok_or_else(|| AutodiffError::Invalid("encode needs at least one snippet".into()))?;
        let batch = g.shape(first)[0];
        let mut h = g.constant(crate::autodiff::Tensor::zeros(&[batch, p.config.hidden]));
        let mut trace = Vec::with_capacity(inputs.len());
        for &x in inputs {
            h = gru_step(g, x, h, p.vars[slot::ENC_WX], p.vars[slot::ENC_WH], p.vars[slot::ENC_B])?;
            trace.push(h);
        }
        Ok(trace)
    }

    fn decode(
        &self,
        g: &mut Graph,
        p: &Bound,
        state: Var,
        steps: usize,
    ) -> Result<Vec<Var>, AutodiffError> {
        let mut h = state;
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            h = gru_step(g, h, h, p.vars[slot::DEC_WX], p.vars[slot::DEC_WH], p.vars[slot::DEC_B])?;
            out.push(h);
        }
        Ok(out)
    }
}
