//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Tape`] owns every intermediate value produced during a forward pass.
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order and [`Tape::backward`] simply walks it in reverse.

use crate::error::{contract, Error, Result};
use crate::mask::AttentionMask;
use crate::scalar::Scalar;
use crate::tensor::{kernels, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Layer-norm variance epsilon.
pub const LN_EPS: f64 = 1e-5;

#[derive(Debug)]
enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, S),
    Transpose(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { input: Var, axis: usize, start: usize },
    Softmax(Var),
    LogSoftmax(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<S>, inv_std: Vec<S> },
    Relu(Var),
    Log(Var),
    Sum(Var),
    Mean(Var),
    Gather { input: Var, index: Vec<usize> },
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    needs_grad: bool,
}

/// Recorded computation. Single-threaded; build one per forward pass.
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, a: &[usize], b: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf. Gradients are tracked iff `tensor.requires_grad`.
    pub fn leaf(&mut self, mut tensor: Tensor<S>) -> Var {
        tensor.grad = None;
        let needs_grad = tensor.requires_grad;
        self.nodes.push(Node {
            value: tensor,
            op: Op::Leaf,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf that never receives gradients.
    pub fn constant(&mut self, mut tensor: Tensor<S>) -> Var {
        tensor.requires_grad = false;
        self.leaf(tensor)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last backward call for a `requires_grad` leaf.
    pub fn grad(&self, v: Var) -> Option<&[S]> {
        self.nodes[v.0].value.grad.as_deref()
    }

    fn matrix(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        self.value(v).expect_matrix(op)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix(a, "matmul")?;
        let (k2, n) = self.matrix(b, "matmul")?;
        if k != k2 {
            return Err(shape_err("matmul", self.shape(a), self.shape(b)));
        }
        let out = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(t, Op::MatMul(a, b), &[a, b]))
    }

    fn zip_same(&mut self, a: Var, b: Var, op: &'static str, f: impl Fn(S, S) -> S) -> Result<Tensor<S>> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(op, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "add", |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b), &[a, b]))
    }

    /// `x[m x n] + bias[n]` broadcast over rows.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let n = tx.cols();
        if tb.numel() != n {
            return Err(shape_err("add_bias", tx.shape(), tb.shape()));
        }
        let b = tb.data();
        let data = tx
            .data()
            .chunks(n)
            .flat_map(|row| row.iter().zip(b).map(|(&v, &w)| v + w))
            .collect();
        let t = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push(t, Op::AddBias(x, bias), &[x, bias]))
    }

    pub fn scale(&mut self, x: Var, s: S) -> Result<Var> {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| v * s).collect();
        let t = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push(t, Op::Scale(x, s), &[x]))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.matrix(x, "transpose")?;
        let data = kernels::transpose(self.value(x).data(), m, n);
        let t = Tensor::new(vec![n, m], data)?;
        Ok(self.push(t, Op::Transpose(x), &[x]))
    }

    /// Concatenates matrices along `axis` (0 = time/rows, 1 = features/columns).
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        if inputs.is_empty() || axis > 1 {
            return Err(contract("concat needs >= 1 input and axis 0 or 1"));
        }
        let mut dims = Vec::with_capacity(inputs.len());
        for &v in inputs {
            dims.push(self.matrix(v, "concat")?);
        }
        let (r0, c0) = dims[0];
        let t = if axis == 0 {
            if let Some(&(_, c)) = dims.iter().find(|d| d.1 != c0) {
                return Err(shape_err("concat", &[r0, c0], &[0, c]));
            }
            let rows: usize = dims.iter().map(|d| d.0).sum();
            let mut data = Vec::with_capacity(rows * c0);
            for &v in inputs {
                data.extend_from_slice(self.value(v).data());
            }
            Tensor::new(vec![rows, c0], data)?
        } else {
            if let Some(&(r, _)) = dims.iter().find(|d| d.0 != r0) {
                return Err(shape_err("concat", &[r0, c0], &[r, 0]));
            }
            let cols: usize = dims.iter().map(|d| d.1).sum();
            let mut data = Vec::with_capacity(r0 * cols);
            for i in 0..r0 {
                for &v in inputs {
                    data.extend_from_slice(self.value(v).row(i));
                }
            }
            Tensor::new(vec![r0, cols], data)?
        };
        Ok(self.push(
            t,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        ))
    }

    /// Half-open slice `[start, end)` along `axis` of a matrix.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.matrix(x, "slice")?;
        let len = if axis == 0 { m } else { n };
        if axis > 1 || start >= end || end > len {
            return Err(contract(format!(
                "slice [{start}, {end}) out of range for axis {axis} of {:?}",
                [m, n]
            )));
        }
        let src = self.value(x);
        let t = if axis == 0 {
            Tensor::new(vec![end - start, n], src.data()[start * n..end * n].to_vec())?
        } else {
            let mut data = Vec::with_capacity(m * (end - start));
            for i in 0..m {
                data.extend_from_slice(&src.row(i)[start..end]);
            }
            Tensor::new(vec![m, end - start], data)?
        };
        Ok(self.push(t, Op::Slice { input: x, axis, start }, &[x]))
    }

    /// Row-wise softmax. Disallowed positions get logit `+ MASK_FILL` before
    /// max subtraction, which makes their probability exactly zero.
    pub fn softmax_rows(&mut self, x: Var, mask: Option<&AttentionMask>) -> Result<Var> {
        let (m, n) = self.matrix(x, "softmax_rows")?;
        if let Some(mask) = mask {
            if mask.rows() != m || mask.cols() != n {
                return Err(shape_err("softmax_rows", &[m, n], &[mask.rows(), mask.cols()]));
            }
            mask.validate()?;
        }
        let src = self.value(x).data();
        let mut out = vec![S::zero(); m * n];
        for i in 0..m {
            let row = &src[i * n..(i + 1) * n];
            let o = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                o[j] = match mask {
                    Some(mk) if !mk.allowed(i, j) => row[j] + S::MASK_FILL,
                    _ => row[j],
                };
            }
            let max = o.iter().copied().fold(S::neg_infinity(), S::max);
            let mut sum = S::zero();
            for v in o.iter_mut() {
                *v = (*v - max).exp();
                sum = sum + *v;
            }
            for v in o.iter_mut() {
                *v = *v / sum;
            }
        }
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(t, Op::Softmax(x), &[x]))
    }

    pub fn log_softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.matrix(x, "log_softmax_rows")?;
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(m * n);
        for row in src.chunks(n) {
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let lse = row.iter().map(|&v| (v - max).exp()).sum::<S>().ln() + max;
            out.extend(row.iter().map(|&v| v - lse));
        }
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(t, Op::LogSoftmax(x), &[x]))
    }

    /// Per-row normalization to zero mean / unit variance, then `* gain + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.matrix(x, "layer_norm")?;
        if n < 2 {
            return Err(contract("layer_norm needs at least 2 features"));
        }
        let (tg, tb) = (self.value(gain), self.value(bias));
        if tg.numel() != n || tb.numel() != n {
            return Err(shape_err("layer_norm", &[m, n], tg.shape()));
        }
        let (g, b) = (tg.data(), tb.data());
        let src = self.value(x).data();
        let nn = S::c(n as f64);
        let eps = S::c(LN_EPS);
        let mut xhat = Vec::with_capacity(m * n);
        let mut inv_std = Vec::with_capacity(m);
        let mut out = Vec::with_capacity(m * n);
        for row in src.chunks(n) {
            let mean = row.iter().copied().sum::<S>() / nn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / nn;
            let is = S::one() / (var + eps).sqrt();
            inv_std.push(is);
            for j in 0..n {
                let h = (row[j] - mean) * is;
                xhat.push(h);
                out.push(h * g[j] + b[j]);
            }
        }
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(
            t,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            &[x, gain, bias],
        ))
    }

    /// Which rectifier inputs are positive, over every `relu` node in order.
    /// Two evaluations with equal patterns lie on the same smooth piece.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(x) => Some(x),
                _ => None,
            })
            .flat_map(|x| self.value(x).data().iter().map(|&v| v > S::zero()))
            .collect()
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| v.max(S::zero())).collect();
        let t = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push(t, Op::Relu(x), &[x]))
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| v.ln()).collect();
        let t = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push(t, Op::Log(x), &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().copied().sum::<S>();
        Ok(self.push(Tensor::scalar(s), Op::Sum(x), &[x]))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let s = tx.data().iter().copied().sum::<S>() / S::c(tx.numel() as f64);
        Ok(self.push(Tensor::scalar(s), Op::Mean(x), &[x]))
    }

    /// Picks flat elements of `x` into a rank-1 tensor.
    pub fn gather(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let tx = self.value(x);
        if index.is_empty() {
            return Err(contract("gather needs at least one index"));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= tx.numel()) {
            return Err(contract(format!("gather index {bad} out of range {}", tx.numel())));
        }
        let data = index.iter().map(|&i| tx.data()[i]).collect();
        let t = Tensor::new(vec![index.len()], data)?;
        Ok(self.push(
            t,
            Op::Gather {
                input: x,
                index: index.to_vec(),
            },
            &[x],
        ))
    }

    /// Reverse pass from a scalar. Overwrites `grad` on every tracked leaf.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let n = self.value(loss).numel();
        if n != 1 {
            return Err(contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.backward_with_seed(loss, vec![S::one()])
    }

    /// Reverse pass seeded with an arbitrary adjoint for `output`
    /// (a vector-Jacobian product).
    pub fn backward_with_seed(&mut self, output: Var, seed: Vec<S>) -> Result<()> {
        if seed.len() != self.value(output).numel() {
            return Err(shape_err("backward seed", self.shape(output), &[seed.len()]));
        }
        let mut adj: Vec<Option<Vec<S>>> = (0..=output.0).map(|_| None).collect();
        adj[output.0] = Some(seed);
        for node in &mut self.nodes {
            if matches!(node.op, Op::Leaf) && node.needs_grad {
                node.value.grad = None;
            }
        }
        for idx in (0..=output.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            if !self.nodes[idx].needs_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[idx].op {
                self.nodes[idx].value.grad = Some(g);
                continue;
            }
            self.propagate(idx, &g, &mut adj);
        }
        // Tracked leaves not reached by this output have zero gradient.
        for node in &mut self.nodes {
            if matches!(node.op, Op::Leaf) && node.needs_grad && node.value.grad.is_none() {
                node.value.grad = Some(vec![S::zero(); node.value.numel()]);
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[S], adj: &mut [Option<Vec<S>>]) {
        let node = &self.nodes[idx];
        let mut acc = |v: Var, delta: Vec<S>, nodes: &[Node<S>]| {
            if !nodes[v.0].needs_grad {
                return;
            }
            match &mut adj[v.0] {
                Some(existing) => {
                    for (e, d) in existing.iter_mut().zip(delta) {
                        *e = *e + d;
                    }
                }
                slot @ None => *slot = Some(delta),
            }
        };
        let nodes = &self.nodes;
        let val = |v: Var| nodes[v.0].value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (nodes[a.0].value.shape()[0], nodes[a.0].value.shape()[1]);
                let n = nodes[b.0].value.shape()[1];
                if nodes[a.0].needs_grad {
                    acc(*a, kernels::matmul_nt(g, val(*b), m, n, k), nodes);
                }
                if nodes[b.0].needs_grad {
                    acc(*b, kernels::matmul_tn(val(*a), g, m, k, n), nodes);
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.to_vec(), nodes);
                acc(*b, g.to_vec(), nodes);
            }
            Op::AddBias(x, b) => {
                acc(*x, g.to_vec(), nodes);
                if nodes[b.0].needs_grad {
                    let n = nodes[b.0].value.numel();
                    let mut gb = vec![S::zero(); n];
                    for row in g.chunks(n) {
                        for (s, &v) in gb.iter_mut().zip(row) {
                            *s = *s + v;
                        }
                    }
                    acc(*b, gb, nodes);
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                acc(*a, g.iter().zip(vb).map(|(&x, &y)| x * y).collect(), nodes);
                acc(*b, g.iter().zip(va).map(|(&x, &y)| x * y).collect(), nodes);
            }
            Op::Scale(x, s) => acc(*x, g.iter().map(|&v| v * *s).collect(), nodes),
            Op::Transpose(x) => {
                let sh = nodes[x.0].value.shape();
                // g is [n x m]; its transpose is [m x n].
                acc(*x, kernels::transpose(g, sh[1], sh[0]), nodes);
            }
            Op::Concat { inputs, axis } => {
                let out_cols = node.value.shape()[1];
                let mut offset = 0;
                for &v in inputs {
                    let sh = nodes[v.0].value.shape();
                    let (r, c) = (sh[0], sh[1]);
                    let part = if *axis == 0 {
                        g[offset * out_cols..(offset + r) * out_cols].to_vec()
                    } else {
                        let mut p = Vec::with_capacity(r * c);
                        for i in 0..r {
                            p.extend_from_slice(&g[i * out_cols + offset..i * out_cols + offset + c]);
                        }
                        p
                    };
                    offset += if *axis == 0 { r } else { c };
                    acc(v, part, nodes);
                }
            }
            Op::Slice { input, axis, start } => {
                let sh = nodes[input.0].value.shape();
                let (m, n) = (sh[0], sh[1]);
                let mut full = vec![S::zero(); m * n];
                if *axis == 0 {
                    full[start * n..start * n + g.len()].copy_from_slice(g);
                } else {
                    let w = node.value.shape()[1];
                    for i in 0..m {
                        full[i * n + start..i * n + start + w].copy_from_slice(&g[i * w..(i + 1) * w]);
                    }
                }
                acc(*input, full, nodes);
            }
            Op::Softmax(x) => {
                let p = node.value.data();
                let n = node.value.shape()[1];
                let mut gx = Vec::with_capacity(p.len());
                for (prow, grow) in p.chunks(n).zip(g.chunks(n)) {
                    let dot: S = prow.iter().zip(grow).map(|(&a, &b)| a * b).sum();
                    gx.extend(prow.iter().zip(grow).map(|(&pi, &gi)| pi * (gi - dot)));
                }
                acc(*x, gx, nodes);
            }
            Op::LogSoftmax(x) => {
                let ls = node.value.data();
                let n = node.value.shape()[1];
                let mut gx = Vec::with_capacity(ls.len());
                for (lrow, grow) in ls.chunks(n).zip(g.chunks(n)) {
                    let gsum: S = grow.iter().copied().sum();
                    gx.extend(lrow.iter().zip(grow).map(|(&l, &gi)| gi - l.exp() * gsum));
                }
                acc(*x, gx, nodes);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let n = node.value.shape()[1];
                let gv = val(*gain);
                let nn = S::c(n as f64);
                if nodes[x.0].needs_grad {
                    let mut gx = Vec::with_capacity(g.len());
                    for (r, (grow, hrow)) in g.chunks(n).zip(xhat.chunks(n)).enumerate() {
                        let dh: Vec<S> = grow.iter().zip(gv).map(|(&a, &b)| a * b).collect();
                        let sum_dh: S = dh.iter().copied().sum();
                        let sum_dh_h: S = dh.iter().zip(hrow).map(|(&a, &b)| a * b).sum();
                        let k = inv_std[r] / nn;
                        gx.extend(
                            dh.iter()
                                .zip(hrow)
                                .map(|(&d, &h)| k * (nn * d - sum_dh - h * sum_dh_h)),
                        );
                    }
                    acc(*x, gx, nodes);
                }
                if nodes[gain.0].needs_grad || nodes[bias.0].needs_grad {
                    let mut gg = vec![S::zero(); n];
                    let mut gb = vec![S::zero(); n];
                    for (grow, hrow) in g.chunks(n).zip(xhat.chunks(n)) {
                        for j in 0..n {
                            gg[j] = gg[j] + grow[j] * hrow[j];
                            gb[j] = gb[j] + grow[j];
                        }
                    }
                    acc(*gain, gg, nodes);
                    acc(*bias, gb, nodes);
                }
            }
            Op::Relu(x) => {
                let vx = val(*x);
                acc(
                    *x,
                    g.iter()
                        .zip(vx)
                        .map(|(&gi, &xi)| if xi > S::zero() { gi } else { S::zero() })
                        .collect(),
                    nodes,
                );
            }
            Op::Log(x) => {
                let vx = val(*x);
                acc(*x, g.iter().zip(vx).map(|(&gi, &xi)| gi / xi).collect(), nodes);
            }
            Op::Sum(x) => acc(*x, vec![g[0]; nodes[x.0].value.numel()], nodes),
            Op::Mean(x) => {
                let n = nodes[x.0].value.numel();
                acc(*x, vec![g[0] / S::c(n as f64); n], nodes);
            }
            Op::Gather { input, index } => {
                let mut full = vec![S::zero(); nodes[input.0].value.numel()];
                for (&i, &gi) in index.iter().zip(g) {
                    full[i] = full[i] + gi;
                }
                acc(*input, full, nodes);
            }
        }
    }
}
