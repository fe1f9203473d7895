use super::tensor::{
    broadcast_index, broadcast_shape, matmul_a_bt, matmul_at_b, matmul_raw, Tensor,
};
use super::AutodiffError;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unary {
    Neg,
    Exp,
    Log,
    Sigmoid,
    Tanh,
    Softplus,
    Square,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Reduce {
    Sum,
    Mean,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Binary(Binary, Var, Var),
    Unary(Unary, Var),
    Scale(Var, f64),
    Offset(Var),
    MatMul(Var, Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { input: Var, axis: usize, start: usize },
    ReduceAll(Reduce, Var),
    ReduceAxis(Reduce, Var, usize),
    Select { input: Var, axis: usize, picks: Vec<usize> },
    Softmax(Var, usize),
    LogSoftmax(Var, usize),
    Clamp { input: Var, lo: f64, hi: f64 },
    Gather { input: Var, rows: Vec<usize> },
    Reshape(Var),
}

struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Define-by-run computation graph. Nodes are appended in creation order,
/// which is always a valid topological order.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient of `var`; panics when `var` did not require a gradient.
    pub fn wrt(&self, var: Var) -> &Tensor {
        self.get(var).expect("no gradient recorded for node")
    }
}

/// `(outer, len, inner)` decomposition of a shape around `axis`.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, var: Var) -> f64 {
        self.nodes[var.0].value.data()[0]
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// A leaf that does not receive a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, false)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let out_shape = broadcast_shape(&sa, &sb).ok_or_else(|| AutodiffError::Shape {
            op: match kind {
                Binary::Add => "add",
                Binary::Sub => "sub",
                Binary::Mul => "mul",
                Binary::Div => "div",
            },
            shapes: vec![sa.clone(), sb.clone()],
        })?;
        let ia = broadcast_index(&out_shape, &sa);
        let ib = broadcast_index(&out_shape, &sb);
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let data: Vec<f64> = ia
            .iter()
            .zip(&ib)
            .map(|(&i, &j)| {
                let (x, y) = (da[i], db[j]);
                match kind {
                    Binary::Add => x + y,
                    Binary::Sub => x - y,
                    Binary::Mul => x * y,
                    Binary::Div => x / y,
                }
            })
            .collect();
        let value = Tensor::new(out_shape, data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(Op::Binary(kind, a, b), value, rg))
    }

    /// Elementwise sum with broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary(Binary::Div, a, b)
    }

    /// Multiplies every element of `x` by the single value held in `s`.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var, AutodiffError> {
        if self.value(s).numel() != 1 {
            return Err(AutodiffError::Shape {
                op: "scale_by",
                shapes: vec![self.shape(x).to_vec(), self.shape(s).to_vec()],
            });
        }
        self.binary(Binary::Mul, x, s)
    }

    fn unary(&mut self, kind: Unary, x: Var) -> Var {
        let value = self.value(x).map(|v| match kind {
            Unary::Neg => -v,
            Unary::Exp => v.exp(),
            Unary::Log => v.ln(),
            Unary::Sigmoid => sigmoid(v),
            Unary::Tanh => v.tanh(),
            Unary::Softplus => softplus(v),
            Unary::Square => v * v,
        });
        let rg = self.rg(&[x]);
        self.push(Op::Unary(kind, x), value, rg)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.unary(Unary::Neg, x)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(Unary::Exp, x)
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(Unary::Log, x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(Unary::Sigmoid, x)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(Unary::Tanh, x)
    }

    /// `log(1 + e^x)`.
    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(Unary::Softplus, x)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(Unary::Square, x)
    }

    /// Multiplies by a constant.
    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).map(|v| v * c);
        let rg = self.rg(&[x]);
        self.push(Op::Scale(x, c), value, rg)
    }

    /// Adds a constant.
    pub fn offset(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).map(|v| v + c);
        let rg = self.rg(&[x]);
        self.push(Op::Offset(x), value, rg)
    }

    /// `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(AutodiffError::Shape {
                op: "matmul",
                shapes: vec![sa.to_vec(), sb.to_vec()],
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        let value = Tensor::new(vec![m, n], data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(Op::MatMul(a, b), value, rg))
    }

    /// Joins tensors along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, AutodiffError> {
        let shapes: Vec<Vec<usize>> = inputs.iter().map(|&v| self.shape(v).to_vec()).collect();
        let bad = || AutodiffError::Shape {
            op: "concat",
            shapes: shapes.clone(),
        };
        let first = shapes.first().ok_or_else(bad)?;
        if axis >= first.len() {
            return Err(bad());
        }
        for s in &shapes {
            if s.len() != first.len()
                || s.iter()
                    .zip(first)
                    .enumerate()
                    .any(|(d, (x, y))| d != axis && x != y)
            {
                return Err(bad());
            }
        }
        let total: usize = shapes.iter().map(|s| s[axis]).sum();
        let mut out_shape = first.clone();
        out_shape[axis] = total;
        let (outer, _, inner) = axis_split(&out_shape, axis);
        let mut data = Vec::with_capacity(out_shape.iter().product());
        for o in 0..outer {
            for (&v, s) in inputs.iter().zip(&shapes) {
                let chunk = s[axis] * inner;
                data.extend_from_slice(&self.value(v).data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let value = Tensor::new(out_shape, data)?;
        let rg = self.rg(inputs);
        Ok(self.push(
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            value,
            rg,
        ))
    }

    /// `len` entries starting at `start` along `axis`.
    pub fn slice(
        &mut self,
        x: Var,
        axis: usize,
        start: usize,
        len: usize,
    ) -> Result<Var, AutodiffError> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(AutodiffError::Shape {
                op: "slice",
                shapes: vec![shape, vec![start, len]],
            });
        }
        let (outer, full, inner) = axis_split(&shape, axis);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * full * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let value = Tensor::new(out_shape, data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(Op::Slice { input: x, axis, start }, value, rg))
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().sum();
        let rg = self.rg(&[x]);
        self.push(Op::ReduceAll(Reduce::Sum, x), Tensor::scalar(s), rg)
    }

    /// Mean of all elements, shape `[1]`.
    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let m = t.data().iter().sum::<f64>() / t.numel() as f64;
        let rg = self.rg(&[x]);
        self.push(Op::ReduceAll(Reduce::Mean, x), Tensor::scalar(m), rg)
    }

    fn reduce_axis(&mut self, kind: Reduce, x: Var, axis: usize) -> Result<Var, AutodiffError> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(AutodiffError::Shape {
                op: "reduce_axis",
                shapes: vec![shape],
            });
        }
        let (outer, len, inner) = axis_split(&shape, axis);
        let src = self.value(x).data();
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for i in 0..len {
                for j in 0..inner {
                    data[o * inner + j] += src[(o * len + i) * inner + j];
                }
            }
        }
        if kind == Reduce::Mean {
            data.iter_mut().for_each(|v| *v /= len as f64);
        }
        let mut out_shape = shape;
        out_shape[axis] = 1;
        let value = Tensor::new(out_shape, data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(Op::ReduceAxis(kind, x, axis), value, rg))
    }

    /// Sum along `axis`, keeping it with length 1.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var, AutodiffError> {
        self.reduce_axis(Reduce::Sum, x, axis)
    }

    /// Mean along `axis`, keeping it with length 1.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var, AutodiffError> {
        self.reduce_axis(Reduce::Mean, x, axis)
    }

    fn select_axis(&mut self, x: Var, axis: usize, want_max: bool) -> Result<Var, AutodiffError> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || shape[axis] == 0 {
            return Err(AutodiffError::Shape {
                op: if want_max { "max_axis" } else { "min_axis" },
                shapes: vec![shape],
            });
        }
        let (outer, len, inner) = axis_split(&shape, axis);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * inner);
        let mut picks = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for j in 0..inner {
                let mut best = 0;
                let mut best_v = src[o * len * inner + j];
                for i in 1..len {
                    let v = src[(o * len + i) * inner + j];
                    if (want_max && v > best_v) || (!want_max && v < best_v) {
                        best = i;
                        best_v = v;
                    }
                }
                data.push(best_v);
                picks.push(best);
            }
        }
        let mut out_shape = shape;
        out_shape[axis] = 1;
        let value = Tensor::new(out_shape, data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(Op::Select { input: x, axis, picks }, value, rg))
    }

    /// Maximum along `axis`; the gradient flows to the first maximiser.
    pub fn max_axis(&mut self, x: Var, axis: usize) -> Result<Var, AutodiffError> {
        self.select_axis(x, axis, true)
    }

    /// Minimum along `axis`; the gradient flows to the first minimiser.
    pub fn min_axis(&mut self, x: Var, axis: usize) -> Result<Var, AutodiffError> {
        self.select_axis(x, axis, false)
    }

    fn softmax_values(t: &Tensor, axis: usize, log: bool) -> Vec<f64> {
        let (outer, len, inner) = axis_split(t.shape(), axis);
        let src = t.data();
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for j in 0..inner {
                let at = |i: usize| (o * len + i) * inner + j;
                let max = (0..len).map(|i| src[at(i)]).fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = (0..len).map(|i| (src[at(i)] - max).exp()).sum();
                let lz = z.ln();
                for i in 0..len {
                    let shifted = src[at(i)] - max;
                    out[at(i)] = if log { shifted - lz } else { shifted.exp() / z };
                }
            }
        }
        out
    }

    /// Max-shifted softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var, AutodiffError> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(AutodiffError::Shape {
                op: "softmax",
                shapes: vec![shape],
            });
        }
        let data = Self::softmax_values(self.value(x), axis, false);
        let value = Tensor::new(shape, data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(Op::Softmax(x, axis), value, rg))
    }

    /// Max-shifted log-softmax along `axis`.
    pub fn log_softmax(&mut self, x: Var, axis: usize) -> Result<Var, AutodiffError> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(AutodiffError::Shape {
                op: "log_softmax",
                shapes: vec![shape],
            });
        }
        let data = Self::softmax_values(self.value(x), axis, true);
        let value = Tensor::new(shape, data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(Op::LogSoftmax(x, axis), value, rg))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where the bound is active.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(x).map(|v| v.clamp(lo, hi));
        let rg = self.rg(&[x]);
        self.push(Op::Clamp { input: x, lo, hi }, value, rg)
    }

    /// Picks rows (first-axis entries) by index; indices may repeat.
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var, AutodiffError> {
        let shape = self.shape(x).to_vec();
        if shape.is_empty() || rows.iter().any(|&r| r >= shape[0]) {
            return Err(AutodiffError::Shape {
                op: "gather_rows",
                shapes: vec![shape, rows.to_vec()],
            });
        }
        let width: usize = shape[1..].iter().product();
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(rows.len() * width);
        for &r in rows {
            data.extend_from_slice(&src[r * width..(r + 1) * width]);
        }
        let mut out_shape = shape;
        out_shape[0] = rows.len();
        let value = Tensor::new(out_shape, data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(
            Op::Gather {
                input: x,
                rows: rows.to_vec(),
            },
            value,
            rg,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, AutodiffError> {
        let value = self.value(x).clone().reshaped(shape.to_vec()).map_err(|_| {
            AutodiffError::Shape {
                op: "reshape",
                shapes: vec![self.shape(x).to_vec(), shape.to_vec()],
            }
        })?;
        let rg = self.rg(&[x]);
        Ok(self.push(Op::Reshape(x), value, rg))
    }

    /// Reverse-mode sweep from a one-element `root`.
    ///
    /// Every node requiring a gradient gets one; leaves the root does not
    /// depend on receive zeros.
    pub fn backward(&self, root: Var) -> Result<Gradients, AutodiffError> {
        let root_shape = self.shape(root);
        if self.value(root).numel() != 1 {
            return Err(AutodiffError::NonScalarRoot(root_shape.to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);

        for id in (0..=root.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
            grads[id] = Some(g);
        }

        let out = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| {
                if !node.requires_grad {
                    return None;
                }
                let shape = node.value.shape().to_vec();
                Some(match g {
                    Some(data) => Tensor::new(shape, data).expect("gradient shape"),
                    None => Tensor::zeros(&shape),
                })
            })
            .collect();
        Ok(Gradients { grads: out })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], target: Var, contribution: Vec<f64>) {
        if !self.nodes[target.0].requires_grad {
            return;
        }
        match &mut grads[target.0] {
            Some(existing) => existing
                .iter_mut()
                .zip(contribution)
                .for_each(|(e, c)| *e += c),
            slot @ None => *slot = Some(contribution),
        }
    }

    fn accumulate_with(
        &self,
        grads: &mut [Option<Vec<f64>>],
        target: Var,
        f: impl FnOnce(&mut [f64]),
    ) {
        if !self.nodes[target.0].requires_grad {
            return;
        }
        let numel = self.nodes[target.0].value.numel();
        let slot = grads[target.0].get_or_insert_with(|| vec![0.0; numel]);
        f(slot);
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Binary(kind, a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let ia = broadcast_index(out.shape(), ta.shape());
                let ib = broadcast_index(out.shape(), tb.shape());
                let (da, db) = (ta.data(), tb.data());
                self.accumulate_with(grads, *a, |ga| {
                    for (k, (&i, &j)) in ia.iter().zip(&ib).enumerate() {
                        ga[i] += match kind {
                            Binary::Add | Binary::Sub => g[k],
                            Binary::Mul => g[k] * db[j],
                            Binary::Div => g[k] / db[j],
                        };
                    }
                });
                self.accumulate_with(grads, *b, |gb| {
                    for (k, (&i, &j)) in ia.iter().zip(&ib).enumerate() {
                        gb[j] += match kind {
                            Binary::Add => g[k],
                            Binary::Sub => -g[k],
                            Binary::Mul => g[k] * da[i],
                            Binary::Div => -g[k] * da[i] / (db[j] * db[j]),
                        };
                    }
                });
            }
            Op::Unary(kind, x) => {
                let xv = self.value(*x).data();
                let yv = out.data();
                let d: Vec<f64> = (0..g.len())
                    .map(|k| {
                        g[k] * match kind {
                            Unary::Neg => -1.0,
                            Unary::Exp => yv[k],
                            Unary::Log => 1.0 / xv[k],
                            Unary::Sigmoid => yv[k] * (1.0 - yv[k]),
                            Unary::Tanh => 1.0 - yv[k] * yv[k],
                            Unary::Softplus => sigmoid(xv[k]),
                            Unary::Square => 2.0 * xv[k],
                        }
                    })
                    .collect();
                self.accumulate(grads, *x, d);
            }
            Op::Scale(x, c) => self.accumulate(grads, *x, g.iter().map(|v| v * c).collect()),
            Op::Offset(x) | Op::Reshape(x) => self.accumulate(grads, *x, g.to_vec()),
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if self.requires_grad(*a) {
                    self.accumulate(grads, *a, matmul_a_bt(g, tb.data(), m, n, k));
                }
                if self.requires_grad(*b) {
                    self.accumulate(grads, *b, matmul_at_b(ta.data(), g, m, k, n));
                }
            }
            Op::Concat { inputs, axis } => {
                let (outer, _, inner) = axis_split(out.shape(), *axis);
                let total = out.shape()[*axis];
                let mut offset = 0;
                for &v in inputs {
                    let len = self.shape(v)[*axis];
                    let chunk = len * inner;
                    let mut d = Vec::with_capacity(outer * chunk);
                    for o in 0..outer {
                        let base = o * total * inner + offset * inner;
                        d.extend_from_slice(&g[base..base + chunk]);
                    }
                    self.accumulate(grads, v, d);
                    offset += len;
                }
            }
            Op::Slice { input, axis, start } => {
                let in_shape = self.shape(*input).to_vec();
                let (outer, full, inner) = axis_split(&in_shape, *axis);
                let len = out.shape()[*axis];
                self.accumulate_with(grads, *input, |gi| {
                    for o in 0..outer {
                        let base = o * full * inner + start * inner;
                        for (t, &v) in gi[base..base + len * inner]
                            .iter_mut()
                            .zip(&g[o * len * inner..(o + 1) * len * inner])
                        {
                            *t += v;
                        }
                    }
                });
            }
            Op::ReduceAll(kind, x) => {
                let n = self.value(*x).numel();
                let v = match kind {
                    Reduce::Sum => g[0],
                    Reduce::Mean => g[0] / n as f64,
                };
                self.accumulate(grads, *x, vec![v; n]);
            }
            Op::ReduceAxis(kind, x, axis) => {
                let in_shape = self.shape(*x).to_vec();
                let (outer, len, inner) = axis_split(&in_shape, *axis);
                let scale = match kind {
                    Reduce::Sum => 1.0,
                    Reduce::Mean => 1.0 / len as f64,
                };
                let mut d = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    for i in 0..len {
                        for j in 0..inner {
                            d[(o * len + i) * inner + j] = g[o * inner + j] * scale;
                        }
                    }
                }
                self.accumulate(grads, *x, d);
            }
            Op::Select { input, axis, picks } => {
                let in_shape = self.shape(*input).to_vec();
                let (outer, len, inner) = axis_split(&in_shape, *axis);
                self.accumulate_with(grads, *input, |gi| {
                    for o in 0..outer {
                        for j in 0..inner {
                            let k = o * inner + j;
                            gi[(o * len + picks[k]) * inner + j] += g[k];
                        }
                    }
                });
            }
            Op::Softmax(x, axis) => {
                let (outer, len, inner) = axis_split(out.shape(), *axis);
                let y = out.data();
                let mut d = vec![0.0; y.len()];
                for o in 0..outer {
                    for j in 0..inner {
                        let at = |i: usize| (o * len + i) * inner + j;
                        let dot: f64 = (0..len).map(|i| g[at(i)] * y[at(i)]).sum();
                        for i in 0..len {
                            d[at(i)] = y[at(i)] * (g[at(i)] - dot);
                        }
                    }
                }
                self.accumulate(grads, *x, d);
            }
            Op::LogSoftmax(x, axis) => {
                let (outer, len, inner) = axis_split(out.shape(), *axis);
                let y = out.data();
                let mut d = vec![0.0; y.len()];
                for o in 0..outer {
                    for j in 0..inner {
                        let at = |i: usize| (o * len + i) * inner + j;
                        let total: f64 = (0..len).map(|i| g[at(i)]).sum();
                        for i in 0..len {
                            d[at(i)] = g[at(i)] - y[at(i)].exp() * total;
                        }
                    }
                }
                self.accumulate(grads, *x, d);
            }
            Op::Clamp { input, lo, hi } => {
                let xv = self.value(*input).data();
                let d = g
                    .iter()
                    .zip(xv)
                    .map(|(&gv, &x)| if x < *lo || x > *hi { 0.0 } else { gv })
                    .collect();
                self.accumulate(grads, *input, d);
            }
            Op::Gather { input, rows } => {
                let width: usize = self.shape(*input)[1..].iter().product();
                self.accumulate_with(grads, *input, |gi| {
                    for (k, &r) in rows.iter().enumerate() {
                        for (t, &v) in gi[r * width..(r + 1) * width]
                            .iter_mut()
                            .zip(&g[k * width..(k + 1) * width])
                        {
                            *t += v;
                        }
                    }
                });
            }
        }
    }
}
