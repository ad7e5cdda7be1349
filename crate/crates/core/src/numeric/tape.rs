//! Reverse-mode differentiation on a per-forward-pass tape.
//!
//! Each training step records a fresh tape: forward values are computed
//! eagerly through the kernels in [`tensor`](super::tensor), and
//! [`Tape::backward`] replays the recorded ops in reverse. Nodes are
//! referenced by [`NodeId`]; parents always precede children, so a single
//! reverse sweep suffices.

use crate::error::{Error, Result};
use crate::numeric::tensor::{self, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MulRow(NodeId, NodeId),
    Scale(NodeId, f64),
    Matmul(NodeId, NodeId),
    Transpose(NodeId),
    SliceCols(NodeId, usize, usize),
    ConcatCols(Vec<NodeId>),
    SoftmaxRows(NodeId),
    LogSoftmaxRows(NodeId),
    LayerNormRows(NodeId, f64),
    Gelu(NodeId),
    GatherRows(NodeId, Vec<usize>),
    Sum(NodeId),
    /// Σᵢ −logp[i, target_i] over rows of a log-probability matrix.
    PickNll(NodeId, Vec<usize>),
    /// −Σᵢₖ w[i,k]·logp[i,k] for a fixed weight matrix.
    WeightedNll(NodeId, Tensor),
}

struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
    trainable: bool,
}

/// Recorded computation graph. Acyclic by construction.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. the given node, if it was reachable
    /// and marked as needing gradients.
    pub fn wrt(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool, trainable: bool) -> NodeId {
        self.nodes.push(Node { op, value, needs_grad, trainable });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Trainable leaf (a parameter).
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value, true, true)
    }

    /// Non-trainable leaf (an input or a fixed mask).
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value, false, false)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = tensor::add(self.value(a), self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Add(a, b), v, ng, false))
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let v = tensor::add_row(self.value(a), self.value(row))?;
        let ng = self.needs(a) || self.needs(row);
        Ok(self.push(Op::AddRow(a, row), v, ng, false))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = tensor::mul(self.value(a), self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Mul(a, b), v, ng, false))
    }

    pub fn mul_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let v = tensor::mul_row(self.value(a), self.value(row))?;
        let ng = self.needs(a) || self.needs(row);
        Ok(self.push(Op::MulRow(a, row), v, ng, false))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = tensor::scale(self.value(a), c);
        let ng = self.needs(a);
        self.push(Op::Scale(a, c), v, ng, false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = tensor::matmul(self.value(a), self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Matmul(a, b), v, ng, false))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let v = tensor::transpose(self.value(a))?;
        let ng = self.needs(a);
        Ok(self.push(Op::Transpose(a), v, ng, false))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let v = tensor::slice_cols(self.value(a), start, len)?;
        let ng = self.needs(a);
        Ok(self.push(Op::SliceCols(a, start, len), v, ng, false))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let tensors: Vec<&Tensor> = parts.iter().map(|id| self.value(*id)).collect();
        let v = tensor::concat_cols(&tensors)?;
        let ng = parts.iter().any(|id| self.needs(*id));
        Ok(self.push(Op::ConcatCols(parts.to_vec()), v, ng, false))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let v = tensor::softmax_rows(self.value(a))?;
        let ng = self.needs(a);
        Ok(self.push(Op::SoftmaxRows(a), v, ng, false))
    }

    pub fn log_softmax_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let v = tensor::log_softmax_rows(self.value(a))?;
        let ng = self.needs(a);
        Ok(self.push(Op::LogSoftmaxRows(a), v, ng, false))
    }

    pub fn layer_norm_rows(&mut self, a: NodeId, eps: f64) -> Result<NodeId> {
        let v = tensor::layer_norm_rows(self.value(a), eps)?;
        let ng = self.needs(a);
        Ok(self.push(Op::LayerNormRows(a, eps), v, ng, false))
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let v = tensor::gelu(self.value(a));
        let ng = self.needs(a);
        self.push(Op::Gelu(a), v, ng, false)
    }

    pub fn gather_rows(&mut self, table: NodeId, indices: &[usize]) -> Result<NodeId> {
        let v = tensor::gather_rows(self.value(table), indices)?;
        let ng = self.needs(table);
        Ok(self.push(Op::GatherRows(table, indices.to_vec()), v, ng, false))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).data().iter().sum());
        let ng = self.needs(a);
        self.push(Op::Sum(a), v, ng, false)
    }

    /// Negative log-likelihood of `targets` under row log-probabilities.
    pub fn pick_nll(&mut self, logp: NodeId, targets: &[usize]) -> Result<NodeId> {
        let (r, c) = self.value(logp).dims2()?;
        if targets.len() != r {
            return Err(Error::dim(format!("pick_nll: {} rows vs {} targets", r, targets.len())));
        }
        let mut total = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            if t >= c {
                return Err(Error::Index(format!("pick_nll: target {} >= {}", t, c)));
            }
            total -= self.value(logp).data()[i * c + t];
        }
        let ng = self.needs(logp);
        Ok(self.push(Op::PickNll(logp, targets.to_vec()), Tensor::scalar(total), ng, false))
    }

    /// Soft-target cross entropy −Σ w·logp with constant weights.
    pub fn weighted_nll(&mut self, logp: NodeId, weights: Tensor) -> Result<NodeId> {
        if self.value(logp).shape() != weights.shape() {
            return Err(Error::dim(format!(
                "weighted_nll: shapes {:?} vs {:?}",
                self.value(logp).shape(),
                weights.shape()
            )));
        }
        let total: f64 =
            self.value(logp).data().iter().zip(weights.data()).map(|(l, w)| -l * w).sum();
        let ng = self.needs(logp);
        Ok(self.push(Op::WeightedNll(logp, weights), Tensor::scalar(total), ng, false))
    }

    fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, delta: Tensor) {
        match &mut grads[id.0] {
            Some(g) => {
                for (gv, dv) in g.data_mut().iter_mut().zip(delta.data()) {
                    *gv += dv;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    /// Gradients of a scalar `loss` node w.r.t. every grad-needing node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward: loss must be scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(self.value(loss).shape().to_vec(), vec![1.0]).unwrap());

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        Self::accumulate(&mut grads, *a, g.clone());
                    }
                    if self.needs(*b) {
                        Self::accumulate(&mut grads, *b, g.clone());
                    }
                }
                Op::AddRow(a, row) => {
                    if self.needs(*a) {
                        Self::accumulate(&mut grads, *a, g.clone());
                    }
                    if self.needs(*row) {
                        let (r, c) = self.value(*a).dims2()?;
                        let mut rg = vec![0.0; c];
                        for i in 0..r {
                            for j in 0..c {
                                rg[j] += g.data()[i * c + j];
                            }
                        }
                        let shape = self.value(*row).shape().to_vec();
                        Self::accumulate(&mut grads, *row, Tensor::new(shape, rg)?);
                    }
                }
                Op::Mul(a, b) => {
                    if self.needs(*a) {
                        Self::accumulate(&mut grads, *a, tensor::mul(&g, self.value(*b))?);
                    }
                    if self.needs(*b) {
                        Self::accumulate(&mut grads, *b, tensor::mul(&g, self.value(*a))?);
                    }
                }
                Op::MulRow(a, row) => {
                    if self.needs(*a) {
                        Self::accumulate(&mut grads, *a, tensor::mul_row(&g, self.value(*row))?);
                    }
                    if self.needs(*row) {
                        let (r, c) = self.value(*a).dims2()?;
                        let av = self.value(*a).data();
                        let mut rg = vec![0.0; c];
                        for i in 0..r {
                            for j in 0..c {
                                rg[j] += g.data()[i * c + j] * av[i * c + j];
                            }
                        }
                        let shape = self.value(*row).shape().to_vec();
                        Self::accumulate(&mut grads, *row, Tensor::new(shape, rg)?);
                    }
                }
                Op::Scale(a, c) => {
                    if self.needs(*a) {
                        Self::accumulate(&mut grads, *a, tensor::scale(&g, *c));
                    }
                }
                Op::Matmul(a, b) => {
                    if self.needs(*a) {
                        let bt = tensor::transpose(self.value(*b))?;
                        Self::accumulate(&mut grads, *a, tensor::matmul(&g, &bt)?);
                    }
                    if self.needs(*b) {
                        let at = tensor::transpose(self.value(*a))?;
                        Self::accumulate(&mut grads, *b, tensor::matmul(&at, &g)?);
                    }
                }
                Op::Transpose(a) => {
                    if self.needs(*a) {
                        Self::accumulate(&mut grads, *a, tensor::transpose(&g)?);
                    }
                }
                Op::SliceCols(a, start, len) => {
                    if self.needs(*a) {
                        let (r, c) = self.value(*a).dims2()?;
                        let mut da = vec![0.0; r * c];
                        for i in 0..r {
                            for j in 0..*len {
                                da[i * c + start + j] = g.data()[i * len + j];
                            }
                        }
                        Self::accumulate(&mut grads, *a, Tensor::new(vec![r, c], da)?);
                    }
                }
                Op::ConcatCols(parts) => {
                    let (r, _) = node.value.dims2()?;
                    let total = node.value.shape()[1];
                    let mut offset = 0;
                    for p in parts {
                        let (_, pc) = self.value(*p).dims2()?;
                        if self.needs(*p) {
                            let mut dp = vec![0.0; r * pc];
                            for i in 0..r {
                                for j in 0..pc {
                                    dp[i * pc + j] = g.data()[i * total + offset + j];
                                }
                            }
                            Self::accumulate(&mut grads, *p, Tensor::new(vec![r, pc], dp)?);
                        }
                        offset += pc;
                    }
                }
                Op::SoftmaxRows(a) => {
                    if self.needs(*a) {
                        let y = &node.value;
                        let (r, c) = y.dims2()?;
                        let mut da = vec![0.0; r * c];
                        for i in 0..r {
                            let yr = &y.data()[i * c..(i + 1) * c];
                            let gr = &g.data()[i * c..(i + 1) * c];
                            let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                            for j in 0..c {
                                da[i * c + j] = yr[j] * (gr[j] - dot);
                            }
                        }
                        Self::accumulate(&mut grads, *a, Tensor::new(vec![r, c], da)?);
                    }
                }
                Op::LogSoftmaxRows(a) => {
                    if self.needs(*a) {
                        let y = &node.value;
                        let (r, c) = y.dims2()?;
                        let mut da = vec![0.0; r * c];
                        for i in 0..r {
                            let yr = &y.data()[i * c..(i + 1) * c];
                            let gr = &g.data()[i * c..(i + 1) * c];
                            let gsum: f64 = gr.iter().sum();
                            for j in 0..c {
                                da[i * c + j] = gr[j] - yr[j].exp() * gsum;
                            }
                        }
                        Self::accumulate(&mut grads, *a, Tensor::new(vec![r, c], da)?);
                    }
                }
                Op::LayerNormRows(a, eps) => {
                    if self.needs(*a) {
                        let x = self.value(*a);
                        let y = &node.value;
                        let (r, c) = x.dims2()?;
                        let mut da = vec![0.0; r * c];
                        for i in 0..r {
                            let xr = &x.data()[i * c..(i + 1) * c];
                            let yr = &y.data()[i * c..(i + 1) * c];
                            let gr = &g.data()[i * c..(i + 1) * c];
                            let mean = xr.iter().sum::<f64>() / c as f64;
                            let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                                / c as f64;
                            let inv = 1.0 / (var + eps).sqrt();
                            let gmean = gr.iter().sum::<f64>() / c as f64;
                            let gymean =
                                gr.iter().zip(yr).map(|(g, y)| g * y).sum::<f64>() / c as f64;
                            for j in 0..c {
                                da[i * c + j] = inv * (gr[j] - gmean - yr[j] * gymean);
                            }
                        }
                        Self::accumulate(&mut grads, *a, Tensor::new(vec![r, c], da)?);
                    }
                }
                Op::Gelu(a) => {
                    if self.needs(*a) {
                        let x = self.value(*a);
                        let data = x
                            .data()
                            .iter()
                            .zip(g.data())
                            .map(|(&x, &g)| g * tensor::gelu_grad_scalar(x))
                            .collect();
                        Self::accumulate(
                            &mut grads,
                            *a,
                            Tensor::new(x.shape().to_vec(), data)?,
                        );
                    }
                }
                Op::GatherRows(table, indices) => {
                    if self.needs(*table) {
                        let (k, w) = self.value(*table).dims2()?;
                        let mut dt = vec![0.0; k * w];
                        for (i, &ix) in indices.iter().enumerate() {
                            for j in 0..w {
                                dt[ix * w + j] += g.data()[i * w + j];
                            }
                        }
                        Self::accumulate(&mut grads, *table, Tensor::new(vec![k, w], dt)?);
                    }
                }
                Op::Sum(a) => {
                    if self.needs(*a) {
                        let gv = g.item()?;
                        Self::accumulate(&mut grads, *a, Tensor::full(self.value(*a).shape(), gv));
                    }
                }
                Op::PickNll(logp, targets) => {
                    if self.needs(*logp) {
                        let (r, c) = self.value(*logp).dims2()?;
                        let gv = g.item()?;
                        let mut dl = vec![0.0; r * c];
                        for (i, &t) in targets.iter().enumerate() {
                            dl[i * c + t] = -gv;
                        }
                        Self::accumulate(&mut grads, *logp, Tensor::new(vec![r, c], dl)?);
                    }
                }
                Op::WeightedNll(logp, weights) => {
                    if self.needs(*logp) {
                        let gv = g.item()?;
                        let dl = tensor::scale(weights, -gv);
                        Self::accumulate(&mut grads, *logp, dl);
                    }
                }
            }
            // Interior grads are dropped once propagated; only leaves keep theirs.
            if node.trainable {
                grads[idx] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }
}
