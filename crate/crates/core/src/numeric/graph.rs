//! Tape-based reverse-mode differentiation over [`Matrix`] values.
//!
//! Nodes are appended in evaluation order, so insertion order is already a
//! topological order and [`Graph::backward`] simply walks the tape in reverse.
//! Parameters are pulled in with [`Graph::param`]; repeated requests for the
//! same [`ParamId`] return the same node, which makes gradient accumulation
//! across shared uses automatic.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Matrix, ParamId, ParamSet};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    None,
    Tanh,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::None => v,
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(0.0),
            Activation::Sigmoid => sigmoid(v),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::None => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

#[derive(Debug)]
struct LstmCache {
    /// `[x_t ; h_{t-1}]` per step.
    inputs: Vec<Vec<f64>>,
    /// Gate activations `[i ; f ; g ; o]` per step.
    gates: Vec<Vec<f64>>,
    cells: Vec<Vec<f64>>,
    cell_tanh: Vec<Vec<f64>>,
}

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Scale(NodeId, f64),
    Activate(NodeId, Activation),
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    SoftmaxCols(NodeId),
    Conv1d {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        width: usize,
        unfolded: Matrix,
    },
    Lstm {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        cache: LstmCache,
    },
    MaxPoolTime {
        input: NodeId,
        argmax: Vec<usize>,
    },
    Dropout {
        input: NodeId,
        mask: Matrix,
    },
    SumAll(NodeId),
    Nll {
        logits: NodeId,
        gold: usize,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Matrix,
    needs_grad: bool,
}

/// Gradients of a scalar loss with respect to every parameter it reached.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    entries: Vec<(ParamId, Matrix)>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Matrix> {
        self.entries.iter().find(|(p, _)| *p == id).map(|(_, g)| g)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(ParamId, Matrix)> {
        self.entries.iter()
    }

    /// Adds `scale · gradient` into each parameter's gradient buffer.
    pub fn add_to(&self, params: &mut ParamSet, scale: f64) {
        for (id, g) in &self.entries {
            let buf = &mut params.get_mut(*id).gradient;
            for (b, v) in buf.data_mut().iter_mut().zip(g.data()) {
                *b += scale * v;
            }
        }
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, NodeId>,
}

fn shape_err(op: &'static str, a: &Matrix, b: &Matrix) -> Error {
    Error::Shape {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Matrix, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].needs_grad)
    }

    /// A constant input; no gradient flows into it.
    pub fn input(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Input, value, false)
    }

    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> NodeId {
        if let Some(&node) = self.param_nodes.get(&id) {
            return node;
        }
        let node = self.push(Op::Param(id), params.value(id).clone(), true);
        self.param_nodes.insert(id, node);
        node
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).matmul(self.value(b))?;
        let needs = self.needs(&[a, b]);
        Ok(self.push(Op::MatMul(a, b), value, needs))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).transpose();
        let needs = self.needs(&[a]);
        self.push(Op::Transpose(a), value, needs)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        let needs = self.needs(&[a, b]);
        Ok(self.push(Op::Add(a, b), value, needs))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        let needs = self.needs(&[a, b]);
        Ok(self.push(Op::Sub(a, b), value, needs))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        let needs = self.needs(&[a, b]);
        Ok(self.push(Op::Mul(a, b), value, needs))
    }

    /// Adds a column vector `bias` to every column of `x`.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.cols() != 1 || bv.rows() != xv.rows() {
            return Err(shape_err("add_bias", xv, bv));
        }
        let mut value = xv.clone();
        let cols = value.cols();
        for (r, chunk) in value.data_mut().chunks_mut(cols.max(1)).enumerate() {
            let b = bv.data()[r];
            chunk.iter_mut().for_each(|v| *v += b);
        }
        let needs = self.needs(&[x, bias]);
        Ok(self.push(Op::AddBias(x, bias), value, needs))
    }

    pub fn scale(&mut self, x: NodeId, s: f64) -> NodeId {
        let value = self.value(x).map(|v| v * s);
        let needs = self.needs(&[x]);
        self.push(Op::Scale(x, s), value, needs)
    }

    pub fn activate(&mut self, x: NodeId, act: Activation) -> NodeId {
        let value = self.value(x).map(|v| act.apply(v));
        let needs = self.needs(&[x]);
        self.push(Op::Activate(x, act), value, needs)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.activate(x, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.activate(x, Activation::Tanh)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.activate(x, Activation::Relu)
    }

    /// Feature-axis concatenation: stacks the inputs' rows.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return Err(shape_err("concat_rows", self.value(parts[0]), v));
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let value = Matrix::new(rows, cols, data)?;
        let needs = self.needs(parts);
        Ok(self.push(Op::ConcatRows(parts.to_vec()), value, needs))
    }

    /// Sequence-axis concatenation: places the inputs' columns side by side.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let rows = self.value(parts[0]).rows();
        let mut cols = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rows() != rows {
                return Err(shape_err("concat_cols", self.value(parts[0]), v));
            }
            cols += v.cols();
        }
        let mut value = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let v = &self.nodes[p.0].value;
            for r in 0..rows {
                for c in 0..v.cols() {
                    value.set(r, offset + c, v.get(r, c));
                }
            }
            offset += v.cols();
        }
        let needs = self.needs(parts);
        Ok(self.push(Op::ConcatCols(parts.to_vec()), value, needs))
    }

    /// Normalizes every column over its row entries.
    pub fn softmax_cols(&mut self, x: NodeId) -> NodeId {
        let value = softmax_columns(self.value(x));
        let needs = self.needs(&[x]);
        self.push(Op::SoftmaxCols(x), value, needs)
    }

    /// "Same"-padded 1D convolution over the column (time) axis.
    ///
    /// `weight` is `out × (width·d)` with tap-major layout: entry
    /// `[c, k·d + r]` multiplies input row `r` at offset `k − width/2`.
    pub fn conv1d(&mut self, x: NodeId, weight: NodeId, bias: NodeId, width: usize) -> Result<NodeId> {
        let (xv, wv, bv) = (self.value(x), self.value(weight), self.value(bias));
        if width == 0 || width % 2 == 0 {
            return Err(Error::Config(format!("convolution width {width} must be odd")));
        }
        if wv.cols() != width * xv.rows() {
            return Err(shape_err("conv1d", wv, xv));
        }
        if bv.shape() != (wv.rows(), 1) {
            return Err(shape_err("conv1d bias", wv, bv));
        }
        if xv.cols() == 0 {
            return Err(Error::EmptySequence("conv1d"));
        }
        let unfolded = unfold(xv, width);
        let mut value = wv.matmul(&unfolded)?;
        let m = value.cols();
        for (r, chunk) in value.data_mut().chunks_mut(m).enumerate() {
            let b = bv.data()[r];
            chunk.iter_mut().for_each(|v| *v += b);
        }
        let needs = self.needs(&[x, weight, bias]);
        Ok(self.push(
            Op::Conv1d {
                input: x,
                weight,
                bias,
                width,
                unfolded,
            },
            value,
            needs,
        ))
    }

    /// Single-layer unidirectional LSTM from a zero initial state.
    ///
    /// `weight` is `4h × (d + h)` acting on `[x_t ; h_{t-1}]`, gate blocks in
    /// the order input, forget, cell candidate, output. Returns all hidden
    /// states as an `h × m` matrix.
    pub fn lstm(&mut self, x: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let (xv, wv, bv) = (self.value(x), self.value(weight), self.value(bias));
        let (d, m) = xv.shape();
        if wv.rows() % 4 != 0 || wv.rows() == 0 {
            return Err(shape_err("lstm", wv, xv));
        }
        let h = wv.rows() / 4;
        if wv.cols() != d + h {
            return Err(shape_err("lstm", wv, xv));
        }
        if bv.shape() != (4 * h, 1) {
            return Err(shape_err("lstm bias", wv, bv));
        }
        if m == 0 {
            return Err(Error::EmptySequence("lstm"));
        }
        let mut out = Matrix::zeros(h, m);
        let mut cache = LstmCache {
            inputs: Vec::with_capacity(m),
            gates: Vec::with_capacity(m),
            cells: Vec::with_capacity(m),
            cell_tanh: Vec::with_capacity(m),
        };
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        for t in 0..m {
            let mut xh = xv.col(t);
            xh.extend_from_slice(&h_prev);
            let mut gates = vec![0.0; 4 * h];
            for (q, gate) in gates.iter_mut().enumerate() {
                let row = wv.row(q);
                let mut z = 0.0;
                for (w, v) in row.iter().zip(&xh) {
                    z += w * v;
                }
                z += bv.data()[q];
                *gate = if (2 * h..3 * h).contains(&q) {
                    z.tanh()
                } else {
                    sigmoid(z)
                };
            }
            let mut cell = vec![0.0; h];
            let mut cell_tanh = vec![0.0; h];
            for u in 0..h {
                let (i, f, g, o) = (gates[u], gates[h + u], gates[2 * h + u], gates[3 * h + u]);
                cell[u] = f * c_prev[u] + i * g;
                cell_tanh[u] = cell[u].tanh();
                h_prev[u] = o * cell_tanh[u];
                out.set(u, t, h_prev[u]);
            }
            c_prev.clone_from(&cell);
            cache.inputs.push(xh);
            cache.gates.push(gates);
            cache.cells.push(cell);
            cache.cell_tanh.push(cell_tanh);
        }
        let needs = self.needs(&[x, weight, bias]);
        Ok(self.push(
            Op::Lstm {
                input: x,
                weight,
                bias,
                cache,
            },
            out,
            needs,
        ))
    }

    /// Per-row maximum over the time axis. Ties resolve to the first index.
    pub fn max_pool_time(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = self.value(x);
        if xv.cols() == 0 {
            return Err(Error::EmptySequence("max_pool_time"));
        }
        let mut argmax = Vec::with_capacity(xv.rows());
        let mut value = Matrix::zeros(xv.rows(), 1);
        for r in 0..xv.rows() {
            let row = xv.row(r);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = c;
                }
            }
            argmax.push(best);
            value.set(r, 0, row[best]);
        }
        let needs = self.needs(&[x]);
        Ok(self.push(Op::MaxPoolTime { input: x, argmax }, value, needs))
    }

    /// Multiplies by a fixed mask (already scaled by the keep probability).
    pub fn dropout(&mut self, x: NodeId, mask: Matrix) -> Result<NodeId> {
        let value = self.value(x).zip_map(&mask, "dropout", |a, b| a * b)?;
        let needs = self.needs(&[x]);
        Ok(self.push(Op::Dropout { input: x, mask }, value, needs))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let value = Matrix::filled(1, 1, self.value(x).sum());
        let needs = self.needs(&[x]);
        self.push(Op::SumAll(x), value, needs)
    }

    /// `−log softmax(logits)[gold]` for a `k × 1` logit column, with the
    /// probability floored at 1e-12.
    pub fn nll(&mut self, logits: NodeId, gold: usize) -> Result<NodeId> {
        let lv = self.value(logits);
        if lv.cols() != 1 || gold >= lv.rows() {
            return Err(Error::Contract(format!(
                "nll needs a k x 1 logit column and gold < k, got {:?} and gold {gold}",
                lv.shape()
            )));
        }
        let probs = softmax_columns(lv).into_data();
        let p = probs[gold];
        if p < 1e-12 {
            log::warn!("gold probability {p:e} clamped to 1e-12 in loss");
        }
        let value = Matrix::filled(1, 1, -p.max(1e-12).ln());
        let needs = self.needs(&[logits]);
        Ok(self.push(Op::Nll { logits, gold, probs }, value, needs))
    }

    /// `activation(W·x + b)` applied column-wise.
    pub fn dense(&mut self, x: NodeId, weight: NodeId, bias: NodeId, act: Activation) -> Result<NodeId> {
        let lin = self.matmul(weight, x)?;
        let lin = self.add_bias(lin, bias)?;
        Ok(match act {
            Activation::None => lin,
            _ => self.activate(lin, act),
        })
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a 1x1 loss node, got {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));
        let mut out = Gradients::default();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Input => {}
                Op::Param(pid) => out.entries.push((*pid, g)),
                Op::MatMul(a, b) => {
                    if self.nodes[a.0].needs_grad {
                        let da = g.matmul_t(self.value(*b))?;
                        self.accumulate(&mut grads, *a, da);
                    }
                    if self.nodes[b.0].needs_grad {
                        let db = self.value(*a).t_matmul(&g)?;
                        self.accumulate(&mut grads, *b, db);
                    }
                }
                Op::Transpose(a) => self.accumulate(&mut grads, *a, g.transpose()),
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, *b, g.clone());
                    self.accumulate(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut grads, *b, g.map(|v| -v));
                    self.accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let da = g.zip_map(self.value(*b), "mul", |x, y| x * y)?;
                    let db = g.zip_map(self.value(*a), "mul", |x, y| x * y)?;
                    self.accumulate(&mut grads, *a, da);
                    self.accumulate(&mut grads, *b, db);
                }
                Op::AddBias(x, b) => {
                    let cols = g.cols();
                    let db: Vec<f64> = g.data().chunks(cols.max(1)).map(|c| c.iter().sum()).collect();
                    self.accumulate(&mut grads, *b, Matrix::column(&db));
                    self.accumulate(&mut grads, *x, g);
                }
                Op::Scale(x, s) => self.accumulate(&mut grads, *x, g.map(|v| v * s)),
                Op::Activate(x, act) => {
                    let dx = g.zip_map(&node.value, "activate", |gv, y| gv * act.grad_from_output(y))?;
                    self.accumulate(&mut grads, *x, dx);
                }
                Op::ConcatRows(parts) => {
                    let cols = g.cols();
                    let mut offset = 0;
                    for p in parts {
                        let rows = self.value(*p).rows();
                        let slice = g.data()[offset * cols..(offset + rows) * cols].to_vec();
                        offset += rows;
                        self.accumulate(&mut grads, *p, Matrix::new(rows, cols, slice)?);
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let width = self.value(*p).cols();
                        self.accumulate(&mut grads, *p, g.columns(offset, offset + width));
                        offset += width;
                    }
                }
                Op::SoftmaxCols(x) => {
                    let y = &node.value;
                    let mut dx = Matrix::zeros(y.rows(), y.cols());
                    for c in 0..y.cols() {
                        let dot: f64 = (0..y.rows()).map(|r| g.get(r, c) * y.get(r, c)).sum();
                        for r in 0..y.rows() {
                            dx.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                        }
                    }
                    self.accumulate(&mut grads, *x, dx);
                }
                Op::Conv1d {
                    input,
                    weight,
                    bias,
                    width,
                    unfolded,
                } => {
                    if self.nodes[weight.0].needs_grad {
                        self.accumulate(&mut grads, *weight, g.matmul_t(unfolded)?);
                    }
                    if self.nodes[bias.0].needs_grad {
                        let m = g.cols();
                        let db: Vec<f64> = g.data().chunks(m).map(|c| c.iter().sum()).collect();
                        self.accumulate(&mut grads, *bias, Matrix::column(&db));
                    }
                    if self.nodes[input.0].needs_grad {
                        let dcols = self.value(*weight).t_matmul(&g)?;
                        let (d, m) = self.value(*input).shape();
                        self.accumulate(&mut grads, *input, fold(&dcols, d, m, *width));
                    }
                }
                Op::Lstm {
                    input,
                    weight,
                    bias,
                    cache,
                } => {
                    let (dx, dw, db) = lstm_backward(self.value(*input), self.value(*weight), cache, &g);
                    self.accumulate(&mut grads, *input, dx);
                    self.accumulate(&mut grads, *weight, dw);
                    self.accumulate(&mut grads, *bias, db);
                }
                Op::MaxPoolTime { input, argmax } => {
                    let (rows, cols) = self.value(*input).shape();
                    let mut dx = Matrix::zeros(rows, cols);
                    for (r, &c) in argmax.iter().enumerate() {
                        dx.set(r, c, g.get(r, 0));
                    }
                    self.accumulate(&mut grads, *input, dx);
                }
                Op::Dropout { input, mask } => {
                    let dx = g.zip_map(mask, "dropout", |a, b| a * b)?;
                    self.accumulate(&mut grads, *input, dx);
                }
                Op::SumAll(x) => {
                    let (r, c) = self.value(*x).shape();
                    self.accumulate(&mut grads, *x, Matrix::filled(r, c, g.get(0, 0)));
                }
                Op::Nll { logits, gold, probs } => {
                    let scale = g.get(0, 0);
                    let d: Vec<f64> = probs
                        .iter()
                        .enumerate()
                        .map(|(j, &p)| scale * (p - if j == *gold { 1.0 } else { 0.0 }))
                        .collect();
                    self.accumulate(&mut grads, *logits, Matrix::column(&d));
                }
            }
        }
        out.entries.sort_by_key(|(id, _)| *id);
        Ok(out)
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], id: NodeId, g: Matrix) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        match &mut grads[id.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }
}

/// Column-wise softmax with per-column max subtraction.
pub fn softmax_columns(x: &Matrix) -> Matrix {
    let (rows, cols) = x.shape();
    let mut out = Matrix::zeros(rows, cols);
    for c in 0..cols {
        let max = (0..rows).map(|r| x.get(r, c)).fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for r in 0..rows {
            let e = (x.get(r, c) - max).exp();
            out.set(r, c, e);
            total += e;
        }
        for r in 0..rows {
            out.set(r, c, out.get(r, c) / total);
        }
    }
    out
}

/// im2col for "same" padding: row `k·d + r`, column `v` holds
/// `x[r, v + k − width/2]` or zero outside the sequence.
fn unfold(x: &Matrix, width: usize) -> Matrix {
    let (d, m) = x.shape();
    let half = (width / 2) as isize;
    let mut out = Matrix::zeros(width * d, m);
    for k in 0..width {
        let shift = k as isize - half;
        for r in 0..d {
            for v in 0..m {
                let src = v as isize + shift;
                if src >= 0 && (src as usize) < m {
                    out.set(k * d + r, v, x.get(r, src as usize));
                }
            }
        }
    }
    out
}

fn fold(cols: &Matrix, d: usize, m: usize, width: usize) -> Matrix {
    let half = (width / 2) as isize;
    let mut out = Matrix::zeros(d, m);
    for k in 0..width {
        let shift = k as isize - half;
        for r in 0..d {
            for v in 0..m {
                let src = v as isize + shift;
                if src >= 0 && (src as usize) < m {
                    let cur = out.get(r, src as usize);
                    out.set(r, src as usize, cur + cols.get(k * d + r, v));
                }
            }
        }
    }
    out
}

fn lstm_backward(x: &Matrix, w: &Matrix, cache: &LstmCache, g: &Matrix) -> (Matrix, Matrix, Matrix) {
    let (d, m) = x.shape();
    let h = w.rows() / 4;
    let mut dx = Matrix::zeros(d, m);
    let mut dw = Matrix::zeros(w.rows(), w.cols());
    let mut db = vec![0.0; 4 * h];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    for t in (0..m).rev() {
        let gates = &cache.gates[t];
        let tc = &cache.cell_tanh[t];
        for u in 0..h {
            let (i, f, gg, o) = (gates[u], gates[h + u], gates[2 * h + u], gates[3 * h + u]);
            let c_prev = if t > 0 { cache.cells[t - 1][u] } else { 0.0 };
            let dh = g.get(u, t) + dh_next[u];
            let d_o = dh * tc[u];
            let dc = dh * o * (1.0 - tc[u] * tc[u]) + dc_next[u];
            let di = dc * gg;
            let dg = dc * i;
            let df = dc * c_prev;
            dc_next[u] = dc * f;
            dz[u] = di * i * (1.0 - i);
            dz[h + u] = df * f * (1.0 - f);
            dz[2 * h + u] = dg * (1.0 - gg * gg);
            dz[3 * h + u] = d_o * o * (1.0 - o);
        }
        let xh = &cache.inputs[t];
        let mut dxh = vec![0.0; d + h];
        for (q, &dzq) in dz.iter().enumerate() {
            db[q] += dzq;
            if dzq == 0.0 {
                continue;
            }
            let wrow = w.row(q);
            let start = q * (d + h);
            let dwrow = &mut dw.data_mut()[start..start + d + h];
            for p in 0..d + h {
                dwrow[p] += dzq * xh[p];
                dxh[p] += wrow[p] * dzq;
            }
        }
        for r in 0..d {
            dx.set(r, t, dxh[r]);
        }
        dh_next.copy_from_slice(&dxh[d..]);
    }
    (dx, dw, Matrix::column(&db))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_uniform_and_worked_column() {
        let s = softmax_columns(&Matrix::column(&[0.0, 0.0]));
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax_columns(&Matrix::column(&[1.0, 2.0, 3.0]));
        let expected = [0.09003, 0.24473, 0.66524];
        for (v, e) in s.data().iter().zip(expected) {
            assert!((v - e).abs() < 1e-5);
        }
    }

    #[test]
    fn softmax_shift_invariant() {
        let a = softmax_columns(&Matrix::column(&[0.3, -1.2, 2.0]));
        let b = softmax_columns(&Matrix::column(&[100.3, 98.8, 102.0]));
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_empty_is_empty() {
        assert!(softmax_columns(&Matrix::zeros(0, 0)).is_empty());
    }

    #[test]
    fn conv_hand_example_zero_padded() {
        let mut g = Graph::new();
        let x = g.input(Matrix::from_rows(&[&[1.0, 2.0, 3.0]]));
        let w = g.input(Matrix::from_rows(&[&[1.0, 1.0, 1.0]]));
        let b = g.input(Matrix::zeros(1, 1));
        let y = g.conv1d(x, w, b, 3).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 6.0, 5.0]);
    }

    #[test]
    fn conv_rejects_even_width() {
        let mut g = Graph::new();
        let x = g.input(Matrix::zeros(1, 3));
        let w = g.input(Matrix::zeros(1, 2));
        let b = g.input(Matrix::zeros(1, 1));
        assert!(matches!(g.conv1d(x, w, b, 2), Err(Error::Config(_))));
    }

    #[test]
    fn lstm_zero_weights_give_zero_states() {
        let mut g = Graph::new();
        let x = g.input(Matrix::from_rows(&[&[1.0, -2.0, 3.0], &[0.5, 0.5, 0.5]]));
        let w = g.input(Matrix::zeros(12, 5));
        let b = g.input(Matrix::zeros(12, 1));
        let y = g.lstm(x, w, b).unwrap();
        assert_eq!(g.value(y), &Matrix::zeros(3, 3));
    }

    #[test]
    fn lstm_single_step_matches_scalar_formulas() {
        // d = 1, h = 1: z = w_x x + w_h·0 + b per gate.
        let (x, wx, b) = (0.7, [0.3, -0.4, 0.9, 0.2], [0.1, 0.2, -0.3, 0.05]);
        let mut g = Graph::new();
        let xn = g.input(Matrix::from_rows(&[&[x]]));
        let w = g.input(Matrix::from_rows(&[&[wx[0], 0.5], &[wx[1], 0.5], &[wx[2], 0.5], &[wx[3], 0.5]]));
        let bn = g.input(Matrix::column(&b));
        let y = g.lstm(xn, w, bn).unwrap();

        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = s(wx[0] * x + b[0]);
        let cand = (wx[2] * x + b[2]).tanh();
        let o = s(wx[3] * x + b[3]);
        let c = i * cand;
        let expected = o * c.tanh();
        assert!((g.value(y).get(0, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn max_pool_picks_row_maxima_and_first_tie() {
        let mut g = Graph::new();
        let x = g.input(Matrix::from_rows(&[&[1.0, 3.0, 2.0], &[5.0, 4.0, 6.0]]));
        let y = g.max_pool_time(x).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 6.0]);

        let mut ps = ParamSet::new();
        let id = ps.add(super::super::ParamTensor::new("t", Matrix::from_rows(&[&[2.0, 2.0]]), false));
        let mut g = Graph::new();
        let p = g.param(&ps, id);
        let y = g.max_pool_time(p).unwrap();
        let loss = g.sum(y);
        let grads = g.backward(loss).unwrap();
        assert_eq!(g.value(y).data(), &[2.0]);
        assert_eq!(grads.get(id).unwrap().data(), &[1.0, 0.0]);
    }

    #[test]
    fn max_pool_rejects_empty() {
        let mut g = Graph::new();
        let x = g.input(Matrix::zeros(2, 0));
        assert!(matches!(g.max_pool_time(x), Err(Error::EmptySequence(_))));
    }

    #[test]
    fn dense_scalar_and_identity_cases() {
        let mut g = Graph::new();
        let x = g.input(Matrix::filled(1, 1, 3.0));
        let w = g.input(Matrix::filled(1, 1, 2.0));
        let b = g.input(Matrix::filled(1, 1, 1.0));
        let y = g.dense(x, w, b, Activation::Tanh).unwrap();
        assert!((g.value(y).get(0, 0) - 0.999998).abs() < 1e-6);

        let xm = Matrix::from_rows(&[&[1.0, -2.0], &[0.5, 4.0]]);
        let x = g.input(xm.clone());
        let w = g.input(Matrix::identity(2));
        let b = g.input(Matrix::zeros(2, 1));
        let y = g.dense(x, w, b, Activation::None).unwrap();
        assert_eq!(g.value(y), &xm);

        let w0 = g.input(Matrix::zeros(3, 2));
        let b0 = g.input(Matrix::zeros(3, 1));
        let y = g.dense(x, w0, b0, Activation::Tanh).unwrap();
        assert_eq!(g.value(y), &Matrix::zeros(3, 2));
    }

    #[test]
    fn backward_requires_scalar() {
        let mut g = Graph::new();
        let x = g.input(Matrix::zeros(2, 1));
        assert!(matches!(g.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn sum_of_param_has_all_ones_gradient() {
        let mut ps = ParamSet::new();
        let id = ps.add(super::super::ParamTensor::new("w", Matrix::filled(2, 3, 0.7), true));
        let mut g = Graph::new();
        let p = g.param(&ps, id);
        let loss = g.sum(p);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(id).unwrap(), &Matrix::filled(2, 3, 1.0));
    }

    #[test]
    fn shared_param_gradient_is_sum_of_uses() {
        let mut ps = ParamSet::new();
        let id = ps.add(super::super::ParamTensor::new("w", Matrix::from_rows(&[&[1.5, -0.5]]), true));
        let xa = Matrix::column(&[2.0, 1.0]);
        let xb = Matrix::column(&[-1.0, 3.0]);

        let single = |x: &Matrix| {
            let mut g = Graph::new();
            let p = g.param(&ps, id);
            let xi = g.input(x.clone());
            let y = g.matmul(p, xi).unwrap();
            let y = g.tanh(y);
            let l = g.sum(y);
            g.backward(l).unwrap().get(id).unwrap().clone()
        };
        let mut expected = single(&xa);
        expected.add_assign(&single(&xb));

        let mut g = Graph::new();
        let p = g.param(&ps, id);
        let a = g.input(xa.clone());
        let b = g.input(xb.clone());
        let ya = g.matmul(p, a).unwrap();
        let ya = g.tanh(ya);
        let p2 = g.param(&ps, id);
        let yb = g.matmul(p2, b).unwrap();
        let yb = g.tanh(yb);
        let both = g.add(ya, yb).unwrap();
        let l = g.sum(both);
        let got = g.backward(l).unwrap();
        for (x, y) in got.get(id).unwrap().data().iter().zip(expected.data()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn nll_of_uniform_logits_is_ln5() {
        let mut g = Graph::new();
        let c = g.input(Matrix::zeros(5, 1));
        let l = g.nll(c, 2).unwrap();
        assert!((g.value(l).get(0, 0) - 5f64.ln()).abs() < 1e-12);
        assert!((g.value(l).get(0, 0) - 1.60944).abs() < 1e-5);
    }
}
