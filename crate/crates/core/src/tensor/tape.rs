//! Reverse-mode automatic differentiation over tensors.
//!
//! A [`Tape`] records every primitive applied during a forward pass as a
//! node (operation kind, input node ids, forward value). [`Tape::backward`]
//! then walks the nodes in reverse, accumulating gradients; a node used by
//! several consumers receives the sum of all path contributions, which is
//! what shared-weight extractors rely on.
//!
//! Subgradient conventions at non-differentiable points, chosen once and
//! kept fixed so tests are reproducible:
//!
//! * `relu'(0) = 0`
//! * `d|x|/dx` at `x = 0` is `0`
//! * `sqrt'(0) = 0`
//! * `clamp'` is `0` at and beyond the bounds
//! * the hard threshold gate passes no gradient to the threshold
//!
//! A tape and its variables are confined to one thread for the duration of
//! a forward/backward pass.

use crate::error::{Error, Result};
use crate::tensor::{dot, matmul_nn, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Threshold gate flavor. Soft is differentiable in both the input and the
/// threshold; hard is the literal cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateMode {
    Soft,
    Hard,
}

/// Reduction flavor shared by the full and per-row reductions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceKind {
    Mean,
    Sum,
}

enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    /// Broadcast-add a 1 x m bias to every row of an n x m tensor.
    AddRows(usize, usize),
    Abs(usize),
    Relu(usize),
    Tanh(usize),
    Sigmoid(usize),
    Exp(usize),
    Ln(usize),
    Sqrt(usize),
    Clamp(usize, f64, f64),
    LayerNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        eps: f64,
    },
    L2NormRows {
        x: usize,
        eps: f64,
    },
    Gate {
        x: usize,
        t: usize,
        mode: GateMode,
        steepness: f64,
    },
    Reduce(usize, ReduceKind),
    ReduceRows(usize, ReduceKind),
    ConcatCols(Vec<usize>),
    SliceRows {
        a: usize,
        start: usize,
    },
    Reshape(usize),
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Recorded computation graph with per-node gradient buffers.
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Tensor>,
    /// Smallest observed distance to a kink (relu/abs zero crossing, hard
    /// gate cutoff, clamp bound) over the whole forward pass. Finite-
    /// difference checks reject batches whose margin is too small.
    kink_margin: f64,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
            kink_margin: f64::INFINITY,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last [`Tape::backward`] loss w.r.t. `v`.
    pub fn grad(&self, v: Var) -> &Tensor {
        &self.grads[v.0]
    }

    /// Move a gradient out of the tape (leaves an empty tensor behind).
    pub fn take_grad(&mut self, v: Var) -> Tensor {
        std::mem::replace(&mut self.grads[v.0], Tensor::zeros(0, 0))
    }

    /// Mutable access to a leaf's value, for optimizers updating
    /// parameters that live on a reusable tape. Panics on non-leaf nodes:
    /// recorded intermediate values must stay consistent with their
    /// inputs.
    pub fn leaf_value_mut(&mut self, v: Var) -> &mut Tensor {
        assert!(
            matches!(self.nodes[v.0].op, Op::Leaf),
            "leaf_value_mut on a non-leaf node"
        );
        &mut self.nodes[v.0].value
    }

    /// Drop every node from `len` onward, keeping earlier leaves (e.g.
    /// bound parameters) valid for the next forward pass.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
        self.grads.clear();
        self.kink_margin = f64::INFINITY;
    }

    pub fn kink_margin(&self) -> f64 {
        self.kink_margin
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    fn note_kink(&mut self, distance: f64) {
        if distance < self.kink_margin {
            self.kink_margin = distance;
        }
    }

    /// Record an input, constant, or parameter.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn constant(&mut self, value: f64) -> Var {
        self.leaf(Tensor::scalar(value))
    }

    fn binary_same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape(a, b, "add")?;
        let mut out = self.nodes[a.0].value.clone();
        for (o, &x) in out.data_mut().iter_mut().zip(self.nodes[b.0].value.data()) {
            *o += x;
        }
        Ok(self.push(Op::Add(a.0, b.0), out))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape(a, b, "sub")?;
        let mut out = self.nodes[a.0].value.clone();
        for (o, &x) in out.data_mut().iter_mut().zip(self.nodes[b.0].value.data()) {
            *o -= x;
        }
        Ok(self.push(Op::Sub(a.0, b.0), out))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape(a, b, "mul")?;
        let mut out = self.nodes[a.0].value.clone();
        for (o, &x) in out.data_mut().iter_mut().zip(self.nodes[b.0].value.data()) {
            *o *= x;
        }
        Ok(self.push(Op::Mul(a.0, b.0), out))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        for o in out.data_mut() {
            *o *= c;
        }
        self.push(Op::Scale(a.0, c), out)
    }

    /// `x + bias` with `bias` (1 x m) broadcast over the rows of `x` (n x m).
    pub fn add_rows(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (_, m) = self.shape(x);
        if self.shape(bias) != (1, m) {
            return Err(Error::shape(format!(
                "add_rows: bias shape {:?} does not broadcast over {:?}",
                self.shape(bias),
                self.shape(x)
            )));
        }
        let mut out = self.nodes[x.0].value.clone();
        let b = self.nodes[bias.0].value.data().to_vec();
        for row in 0..out.rows() {
            for c in 0..m {
                let v = out.get(row, c) + b[c];
                out.set(row, c, v);
            }
        }
        Ok(self.push(Op::AddRows(x.0, bias.0), out))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (_, ak) = self.shape(a);
        let (bk, _) = self.shape(b);
        if ak != bk {
            return Err(Error::shape(format!(
                "matmul: inner dimensions differ, {:?} x {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let out = matmul_nn(&self.nodes[a.0].value, &self.nodes[b.0].value);
        Ok(self.push(Op::MatMul(a.0, b.0), out))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        let mut margin = f64::INFINITY;
        for o in out.data_mut() {
            // An input at exactly zero is consistent under finite
            // differences: both perturbed evaluations see identical
            // |+-slope*eps| values and cancel, matching sign(0) = 0.
            // Only near-zero-but-nonzero inputs can cross asymmetrically,
            // so exact zeros do not count against the kink margin.
            if *o != 0.0 {
                margin = margin.min(o.abs());
            }
            *o = o.abs();
        }
        self.note_kink(margin);
        self.push(Op::Abs(a.0), out)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        let mut margin = f64::INFINITY;
        for o in out.data_mut() {
            margin = margin.min(o.abs());
            *o = o.max(0.0);
        }
        self.note_kink(margin);
        self.push(Op::Relu(a.0), out)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        for o in out.data_mut() {
            *o = o.tanh();
        }
        self.push(Op::Tanh(a.0), out)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        for o in out.data_mut() {
            *o = 1.0 / (1.0 + (-*o).exp());
        }
        self.push(Op::Sigmoid(a.0), out)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        for o in out.data_mut() {
            *o = o.exp();
        }
        self.push(Op::Exp(a.0), out)
    }

    /// Natural log. The caller keeps inputs strictly positive.
    pub fn ln(&mut self, a: Var) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        for o in out.data_mut() {
            *o = o.ln();
        }
        self.push(Op::Ln(a.0), out)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        for o in out.data_mut() {
            *o = o.sqrt();
        }
        self.push(Op::Sqrt(a.0), out)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        let mut margin = f64::INFINITY;
        for o in out.data_mut() {
            margin = margin.min((*o - lo).abs()).min((*o - hi).abs());
            *o = o.clamp(lo, hi);
        }
        self.note_kink(margin);
        self.push(Op::Clamp(a.0, lo, hi), out)
    }

    /// Row-wise layer normalization with affine parameters:
    /// `y = (x - mean) / sqrt(var + eps) * gamma + beta`, where mean and the
    /// population variance are taken over the feature axis of each row.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (n, m) = self.shape(x);
        if m == 0 {
            return Err(Error::invalid("layer_norm: empty feature axis"));
        }
        if self.shape(gamma) != (1, m) || self.shape(beta) != (1, m) {
            return Err(Error::shape(format!(
                "layer_norm: gamma/beta must be 1x{m}, got {:?} and {:?}",
                self.shape(gamma),
                self.shape(beta)
            )));
        }
        let mut out = Tensor::zeros(n, m);
        {
            let xv = &self.nodes[x.0].value;
            let g = self.nodes[gamma.0].value.data();
            let b = self.nodes[beta.0].value.data();
            for i in 0..n {
                let row = xv.row_slice(i);
                let mean = row.iter().sum::<f64>() / m as f64;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
                let inv_std = 1.0 / (var + eps).sqrt();
                for j in 0..m {
                    out.set(i, j, (row[j] - mean) * inv_std * g[j] + b[j]);
                }
            }
        }
        Ok(self.push(
            Op::LayerNorm {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                eps,
            },
            out,
        ))
    }

    /// Row-wise l2 normalization: `y = x / max(||x||, eps)`.
    pub fn l2_normalize_rows(&mut self, x: Var, eps: f64) -> Var {
        let (n, m) = self.shape(x);
        let mut out = Tensor::zeros(n, m);
        {
            let xv = &self.nodes[x.0].value;
            for i in 0..n {
                let row = xv.row_slice(i);
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                let denom = norm.max(eps);
                for j in 0..m {
                    out.set(i, j, row[j] / denom);
                }
            }
        }
        self.push(Op::L2NormRows { x: x.0, eps }, out)
    }

    /// Learnable threshold gate over non-negative inputs.
    ///
    /// Soft mode: `y = x * sigmoid(steepness * (x - t))`, differentiable in
    /// both `x` and `t`. Hard mode: `y = x` where `x >= t`, else `0`; the
    /// threshold receives no gradient.
    pub fn threshold_gate(
        &mut self,
        x: Var,
        t: Var,
        mode: GateMode,
        steepness: f64,
    ) -> Result<Var> {
        if steepness <= 0.0 {
            return Err(Error::invalid(format!(
                "threshold_gate: steepness must be > 0, got {steepness}"
            )));
        }
        if self.shape(t) != (1, 1) {
            return Err(Error::shape("threshold_gate: threshold must be 1x1"));
        }
        let tv = self.nodes[t.0].value.data()[0];
        let mut out = self.nodes[x.0].value.clone();
        match mode {
            GateMode::Soft => {
                for o in out.data_mut() {
                    *o *= 1.0 / (1.0 + (-steepness * (*o - tv)).exp());
                }
            }
            GateMode::Hard => {
                let mut margin = f64::INFINITY;
                for o in out.data_mut() {
                    margin = margin.min((*o - tv).abs());
                    if *o < tv {
                        *o = 0.0;
                    }
                }
                self.note_kink(margin);
            }
        }
        Ok(self.push(
            Op::Gate {
                x: x.0,
                t: t.0,
                mode,
                steepness,
            },
            out,
        ))
    }

    /// Reduce all entries to a 1 x 1 scalar.
    pub fn reduce(&mut self, a: Var, kind: ReduceKind) -> Result<Var> {
        let value = &self.nodes[a.0].value;
        if value.is_empty() {
            return Err(Error::invalid("reduce: empty tensor"));
        }
        let sum: f64 = value.data().iter().sum();
        let out = match kind {
            ReduceKind::Sum => sum,
            ReduceKind::Mean => sum / value.len() as f64,
        };
        Ok(self.push(Op::Reduce(a.0, kind), Tensor::scalar(out)))
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        self.reduce(a, ReduceKind::Mean)
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        self.reduce(a, ReduceKind::Sum)
    }

    /// Reduce each row of an n x m tensor to one value, yielding n x 1.
    pub fn reduce_rows(&mut self, a: Var, kind: ReduceKind) -> Result<Var> {
        let (n, m) = self.shape(a);
        if m == 0 {
            return Err(Error::invalid("reduce_rows: empty rows"));
        }
        let mut out = Tensor::zeros(n, 1);
        for i in 0..n {
            let sum: f64 = self.nodes[a.0].value.row_slice(i).iter().sum();
            out.set(
                i,
                0,
                match kind {
                    ReduceKind::Sum => sum,
                    ReduceKind::Mean => sum / m as f64,
                },
            );
        }
        Ok(self.push(Op::ReduceRows(a.0, kind), out))
    }

    /// Column-wise concatenation of tensors that share a row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::invalid("concat_cols: empty list"));
        }
        let n = self.shape(parts[0]).0;
        let total: usize = parts.iter().map(|p| self.shape(*p).1).sum();
        for p in parts {
            if self.shape(*p).0 != n {
                return Err(Error::shape(format!(
                    "concat_cols: row counts differ ({} vs {})",
                    self.shape(*p).0,
                    n
                )));
            }
        }
        let mut out = Tensor::zeros(n, total);
        for i in 0..n {
            let mut c = 0;
            for p in parts {
                for &v in self.nodes[p.0].value.row_slice(i) {
                    out.set(i, c, v);
                    c += 1;
                }
            }
        }
        Ok(self.push(Op::ConcatCols(parts.iter().map(|p| p.0).collect()), out))
    }

    /// Contiguous row slice `[start, start + rows)`.
    pub fn slice_rows(&mut self, a: Var, start: usize, rows: usize) -> Result<Var> {
        let (n, m) = self.shape(a);
        if start + rows > n {
            return Err(Error::shape(format!(
                "slice_rows: [{start}, {}) out of {n} rows",
                start + rows
            )));
        }
        let data = self.nodes[a.0].value.data()[start * m..(start + rows) * m].to_vec();
        let out = Tensor::new(rows, m, data)?;
        Ok(self.push(Op::SliceRows { a: a.0, start }, out))
    }

    /// Reinterpret the row-major data with a new shape of equal length.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let value = &self.nodes[a.0].value;
        if rows * cols != value.len() {
            return Err(Error::shape(format!(
                "reshape: {}x{} incompatible with {} elements",
                rows,
                cols,
                value.len()
            )));
        }
        let out = Tensor::new(rows, cols, value.data().to_vec())?;
        Ok(self.push(Op::Reshape(a.0), out))
    }

    /// Reverse-topological gradient accumulation from a scalar loss.
    ///
    /// After this returns, [`Tape::grad`] holds `d loss / d node` for every
    /// node; parameters used in several places receive summed contributions.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::invalid(format!(
                "backward: loss must be a 1x1 scalar, got {:?}",
                self.shape(loss)
            )));
        }
        self.grads = self
            .nodes
            .iter()
            .map(|n| Tensor::zeros(n.value.rows(), n.value.cols()))
            .collect();
        self.grads[loss.0].data_mut()[0] = 1.0;

        for idx in (0..=loss.0).rev() {
            // Leaves terminate propagation; skipping them also avoids
            // scanning every parameter-sized gradient buffer.
            if matches!(self.nodes[idx].op, Op::Leaf) {
                continue;
            }
            if self.grads[idx].data().iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = std::mem::replace(&mut self.grads[idx], Tensor::zeros(0, 0));
            accumulate(&self.nodes, &mut self.grads, idx, &g);
            self.grads[idx] = g;
        }
        Ok(())
    }
}

/// Propagate one node's output gradient into its inputs' buffers, in
/// place (no temporary gradient tensors).
fn accumulate(nodes: &[Node], grads: &mut [Tensor], idx: usize, g: &Tensor) {
    match &nodes[idx].op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            matmul_nt_acc(g, &nodes[*b].value, &mut grads[*a]);
            matmul_tn_acc(&nodes[*a].value, g, &mut grads[*b]);
        }
        Op::Add(a, b) => {
            for (o, &d) in grads[*a].data_mut().iter_mut().zip(g.data()) {
                *o += d;
            }
            for (o, &d) in grads[*b].data_mut().iter_mut().zip(g.data()) {
                *o += d;
            }
        }
        Op::Sub(a, b) => {
            for (o, &d) in grads[*a].data_mut().iter_mut().zip(g.data()) {
                *o += d;
            }
            for (o, &d) in grads[*b].data_mut().iter_mut().zip(g.data()) {
                *o -= d;
            }
        }
        Op::Mul(a, b) => {
            let (a, b) = (*a, *b);
            for ((o, &d), &x) in grads[a]
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(nodes[b].value.data())
            {
                *o += d * x;
            }
            for ((o, &d), &x) in grads[b]
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(nodes[a].value.data())
            {
                *o += d * x;
            }
        }
        Op::Scale(a, c) => {
            for (o, &d) in grads[*a].data_mut().iter_mut().zip(g.data()) {
                *o += c * d;
            }
        }
        Op::AddRows(x, bias) => {
            for (o, &d) in grads[*x].data_mut().iter_mut().zip(g.data()) {
                *o += d;
            }
            let db = grads[*bias].data_mut();
            for i in 0..g.rows() {
                for (o, &d) in db.iter_mut().zip(g.row_slice(i)) {
                    *o += d;
                }
            }
        }
        Op::Abs(a) => {
            let a = *a;
            for ((o, &d), &x) in grads[a]
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(nodes[a].value.data())
            {
                *o += d * if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                };
            }
        }
        Op::Relu(a) => {
            let a = *a;
            for ((o, &d), &x) in grads[a]
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(nodes[a].value.data())
            {
                if x > 0.0 {
                    *o += d;
                }
            }
        }
        Op::Tanh(a) => {
            for ((o, &d), &y) in grads[*a]
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(nodes[idx].value.data())
            {
                *o += d * (1.0 - y * y);
            }
        }
        Op::Sigmoid(a) => {
            for ((o, &d), &y) in grads[*a]
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(nodes[idx].value.data())
            {
                *o += d * y * (1.0 - y);
            }
        }
        Op::Exp(a) => {
            for ((o, &d), &y) in grads[*a]
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(nodes[idx].value.data())
            {
                *o += d * y;
            }
        }
        Op::Ln(a) => {
            let a = *a;
            for ((o, &d), &x) in grads[a]
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(nodes[a].value.data())
            {
                *o += d / x;
            }
        }
        Op::Sqrt(a) => {
            for ((o, &d), &y) in grads[*a]
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(nodes[idx].value.data())
            {
                if y != 0.0 {
                    *o += d * 0.5 / y;
                }
            }
        }
        Op::Clamp(a, lo, hi) => {
            let a = *a;
            for ((o, &d), &x) in grads[a]
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(nodes[a].value.data())
            {
                if x > *lo && x < *hi {
                    *o += d;
                }
            }
        }
        Op::LayerNorm { x, gamma, beta, eps } => {
            let (x, gamma, beta, eps) = (*x, *gamma, *beta, *eps);
            let (n, m) = nodes[x].value.shape();
            let xv = &nodes[x].value;
            let gam = nodes[gamma].value.data();
            let mut xhat = vec![0.0; m];
            for i in 0..n {
                let row = xv.row_slice(i);
                let mean = row.iter().sum::<f64>() / m as f64;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
                let inv_std = 1.0 / (var + eps).sqrt();
                let gr = g.row_slice(i);
                let mut mean_gy = 0.0;
                let mut mean_gy_xhat = 0.0;
                for j in 0..m {
                    xhat[j] = (row[j] - mean) * inv_std;
                    let gy = gr[j] * gam[j];
                    mean_gy += gy;
                    mean_gy_xhat += gy * xhat[j];
                }
                mean_gy /= m as f64;
                mean_gy_xhat /= m as f64;
                {
                    let dx = grads[x].data_mut();
                    for j in 0..m {
                        let gy = gr[j] * gam[j];
                        dx[i * m + j] += (gy - mean_gy - xhat[j] * mean_gy_xhat) * inv_std;
                    }
                }
                {
                    let dgamma = grads[gamma].data_mut();
                    for j in 0..m {
                        dgamma[j] += gr[j] * xhat[j];
                    }
                }
                {
                    let dbeta = grads[beta].data_mut();
                    for j in 0..m {
                        dbeta[j] += gr[j];
                    }
                }
            }
        }
        Op::L2NormRows { x, eps } => {
            let (x, eps) = (*x, *eps);
            let (n, m) = nodes[x].value.shape();
            let xv = &nodes[x].value;
            let yv = &nodes[idx].value;
            let dx = grads[x].data_mut();
            for i in 0..n {
                let row = xv.row_slice(i);
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                let gr = g.row_slice(i);
                if norm >= eps {
                    let yr = yv.row_slice(i);
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for j in 0..m {
                        dx[i * m + j] += (gr[j] - yr[j] * dot) / norm;
                    }
                } else {
                    for j in 0..m {
                        dx[i * m + j] += gr[j] / eps;
                    }
                }
            }
        }
        Op::Gate { x, t, mode, steepness } => {
            let (x, t, mode, s) = (*x, *t, *mode, *steepness);
            let tv = nodes[t].value.data()[0];
            let mut dt = 0.0;
            {
                let dx = grads[x].data_mut();
                match mode {
                    GateMode::Soft => {
                        for ((o, &d), &xv) in
                            dx.iter_mut().zip(g.data()).zip(nodes[x].value.data())
                        {
                            let sig = 1.0 / (1.0 + (-s * (xv - tv)).exp());
                            let dsig = sig * (1.0 - sig) * s;
                            dt -= d * xv * dsig;
                            *o += d * (sig + xv * dsig);
                        }
                    }
                    GateMode::Hard => {
                        for ((o, &d), &xv) in
                            dx.iter_mut().zip(g.data()).zip(nodes[x].value.data())
                        {
                            if xv >= tv {
                                *o += d;
                            }
                        }
                    }
                }
            }
            grads[t].data_mut()[0] += dt;
        }
        Op::Reduce(a, kind) => {
            let a = *a;
            let per = match kind {
                ReduceKind::Sum => g.data()[0],
                ReduceKind::Mean => g.data()[0] / nodes[a].value.len() as f64,
            };
            for o in grads[a].data_mut() {
                *o += per;
            }
        }
        Op::ReduceRows(a, kind) => {
            let a = *a;
            let (n, m) = nodes[a].value.shape();
            let da = grads[a].data_mut();
            for i in 0..n {
                let per = match kind {
                    ReduceKind::Sum => g.get(i, 0),
                    ReduceKind::Mean => g.get(i, 0) / m as f64,
                };
                for o in &mut da[i * m..(i + 1) * m] {
                    *o += per;
                }
            }
        }
        Op::ConcatCols(parts) => {
            let n = g.rows();
            let mut offset = 0;
            for &p in parts {
                let w = nodes[p].value.cols();
                let dp = grads[p].data_mut();
                for i in 0..n {
                    let gr = g.row_slice(i);
                    for j in 0..w {
                        dp[i * w + j] += gr[offset + j];
                    }
                }
                offset += w;
            }
        }
        Op::SliceRows { a, start } => {
            let (a, start) = (*a, *start);
            let m = nodes[a].value.cols();
            let da = grads[a].data_mut();
            for i in 0..g.rows() {
                let gr = g.row_slice(i);
                for j in 0..m {
                    da[(start + i) * m + j] += gr[j];
                }
            }
        }
        Op::Reshape(a) => {
            for (o, &d) in grads[*a].data_mut().iter_mut().zip(g.data()) {
                *o += d;
            }
        }
    }
}

/// out += a * b^T
fn matmul_nt_acc(a: &Tensor, b: &Tensor, out: &mut Tensor) {
    let (m, k, n) = (a.rows(), a.cols(), b.rows());
    debug_assert_eq!(out.shape(), (m, n));
    for i in 0..m {
        let a_row = a.row_slice(i);
        let o_row = &mut out.data_mut()[i * n..(i + 1) * n];
        for (j, o) in o_row.iter_mut().enumerate() {
            *o += dot(a_row, &b.data()[j * k..(j + 1) * k]);
        }
    }
}

/// out += a^T * b
fn matmul_tn_acc(a: &Tensor, b: &Tensor, out: &mut Tensor) {
    let (k, m, n) = (a.rows(), a.cols(), b.cols());
    debug_assert_eq!(out.shape(), (m, n));
    for p in 0..k {
        let a_row = a.row_slice(p);
        let b_row = b.row_slice(p);
        for (i, &a_pi) in a_row.iter().enumerate() {
            if a_pi == 0.0 {
                continue;
            }
            let o_row = &mut out.data_mut()[i * n..(i + 1) * n];
            for (o, &b_pj) in o_row.iter_mut().zip(b_row) {
                *o += a_pi * b_pj;
            }
        }
    }
}
