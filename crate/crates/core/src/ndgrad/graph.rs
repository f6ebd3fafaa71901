//! Tape-based reverse-mode differentiation.

use std::sync::Arc;

use super::kernels::{self, corner_indices};
use super::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::exec::Exec;

/// Lower clamp on the probability inside the negative log-likelihood.
pub const PROB_FLOOR: f64 = 1e-12;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Reshape(Var),
    Sum(Var),
    Conv { x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize },
    Deconv { x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize },
    MaxPool { x: Var, argmax: Arc<Vec<usize>> },
    Unpool { x: Var, indices: Arc<Vec<usize>> },
    MeanSquaredError(Var, Var),
    /// Softmax over negative squared distances from `z` to each exemplar.
    NegDistSoftmax { z: Var, exemplars: Vec<Var> },
    /// `-ln(max(p[label], PROB_FLOOR))`.
    Nll { p: Var, label: usize },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    /// Accumulated gradient, populated for leaves that require grad.
    grad: Option<Vec<f64>>,
}

/// A forward computation recorded for backpropagation.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<(String, Var)>,
    exec: Exec,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn with_exec(exec: Exec) -> Self {
        Graph { exec, ..Graph::default() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Result<Var> {
        value.check_finite(op_name(&op))?;
        self.nodes.push(Node { value, op, requires_grad, grad: None });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Evaluates `op` and records it. `shape` is the output shape for ops
    /// whose result shape is not implied by their inputs.
    fn record(&mut self, op: Op, shape: &[usize]) -> Result<Var> {
        let t = self.forward(&op, shape)?;
        let rg = op_inputs(&op).iter().any(|&v| self.rg(v));
        self.push(t, op, rg)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of a leaf after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// A constant input.
    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Leaf, false)
    }

    /// A differentiable leaf.
    pub fn leaf(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Leaf, true)
    }

    /// Copies parameter `name` from `store` onto the graph as a trainable leaf.
    /// Repeated calls for the same name return the same node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        if let Some(&(_, v)) = self.params.iter().find(|(n, _)| n == name) {
            return Ok(v);
        }
        let t = store
            .get(name)
            .ok_or_else(|| Error::Shape(format!("unknown parameter {name:?}")))?
            .clone();
        let v = self.leaf(t)?;
        self.params.push((name.to_string(), v));
        Ok(v)
    }

    pub fn params(&self) -> &[(String, Var)] {
        &self.params
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Shape(format!("add: {:?} vs {:?}", ta.shape(), tb.shape())));
        }
        self.record(Op::Add(a, b), &[])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.record(Op::Scale(a, s), &[])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Relu(a), &[])
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        self.record(Op::Reshape(a), &shape)
    }

    pub fn flatten(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        self.reshape(a, vec![n])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Sum(a), &[])
    }

    pub fn conv3d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        self.record(Op::Conv { x, w, b, stride, pad }, &[])
    }

    /// Stride-1 convolution with "same" zero padding (odd kernels).
    pub fn conv3d_same(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let k = self.value(w).shape().get(2).copied().unwrap_or(1);
        if k % 2 == 0 {
            return Err(Error::Shape(format!("same padding needs an odd kernel, got {k}")));
        }
        self.conv3d(x, w, b, 1, k / 2)
    }

    pub fn deconv3d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        self.record(Op::Deconv { x, w, b, stride, pad }, &[])
    }

    /// Returns the pooled node and the argmax switches it recorded.
    pub fn maxpool3d(&mut self, x: Var) -> Result<(Var, Arc<Vec<usize>>)> {
        let (t, arg) = kernels::maxpool3d(self.value(x))?;
        let arg = Arc::new(arg);
        let rg = self.rg(x);
        let v = self.push(t, Op::MaxPool { x, argmax: Arc::clone(&arg) }, rg)?;
        Ok((v, arg))
    }

    pub fn maxunpool3d(&mut self, x: Var, indices: Arc<Vec<usize>>, out_shape: &[usize]) -> Result<Var> {
        self.record(Op::Unpool { x, indices }, out_shape)
    }

    /// Unpools to twice the spatial size, placing each value at its window's
    /// first voxel.
    pub fn unpool_corner(&mut self, x: Var) -> Result<Var> {
        let (c, [d, h, w]) = self.value(x).dims4("unpool input")?;
        let idx = Arc::new(corner_indices(c, [d, h, w]));
        self.maxunpool3d(x, idx, &[c, 2 * d, 2 * h, 2 * w])
    }

    /// `(1/D) * sum_d (a_d - b_d)^2`.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.len() != tb.len() {
            return Err(Error::Shape(format!("mse: {:?} vs {:?}", ta.shape(), tb.shape())));
        }
        self.record(Op::MeanSquaredError(a, b), &[])
    }

    /// `P_i = exp(-|z - e_i|^2) / sum_j exp(-|z - e_j|^2)`.
    pub fn neg_dist_softmax(&mut self, z: Var, exemplars: &[Var]) -> Result<Var> {
        if exemplars.is_empty() {
            return Err(Error::Shape("similarity needs at least one exemplar".into()));
        }
        let zlen = self.value(z).len();
        if let Some(&e) = exemplars.iter().find(|&&e| self.value(e).len() != zlen) {
            return Err(Error::Shape(format!(
                "embedding length {zlen} vs exemplar length {}",
                self.value(e).len()
            )));
        }
        self.record(Op::NegDistSoftmax { z, exemplars: exemplars.to_vec() }, &[])
    }

    pub fn nll(&mut self, p: Var, label: usize) -> Result<Var> {
        let tp = self.value(p);
        if label >= tp.len() {
            return Err(Error::Label { label, classes: tp.len() });
        }
        self.record(Op::Nll { p, label }, &[])
    }

    /// Computes the value of `op` from the current values of its inputs.
    fn forward(&self, op: &Op, shape: &[usize]) -> Result<Tensor> {
        let exec = self.exec;
        let map = |a: &Var, f: &dyn Fn(f64) -> f64| {
            let t = self.value(*a);
            Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect())
        };
        match op {
            Op::Leaf => Err(Error::Shape("leaves have no forward rule".into())),
            Op::Add(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                Tensor::new(ta.shape().to_vec(), ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect())
            }
            Op::Scale(a, s) => map(a, &|x| x * s),
            Op::Relu(a) => map(a, &|x| x.max(0.0)),
            Op::Reshape(a) => self.value(*a).clone().reshaped(shape.to_vec()),
            Op::Sum(a) => Ok(Tensor::scalar(self.value(*a).data().iter().sum())),
            Op::Conv { x, w, b, stride, pad } => kernels::conv3d_forward(
                self.value(*x),
                self.value(*w),
                b.map(|b| self.value(b)),
                *stride,
                *pad,
                exec,
            ),
            Op::Deconv { x, w, b, stride, pad } => kernels::deconv3d_forward(
                self.value(*x),
                self.value(*w),
                b.map(|b| self.value(b)),
                *stride,
                *pad,
                exec,
            ),
            Op::MaxPool { x, .. } => Ok(kernels::maxpool3d(self.value(*x))?.0),
            Op::Unpool { x, indices } => kernels::maxunpool3d(self.value(*x), indices, shape),
            Op::MeanSquaredError(a, b) => {
                let (ta, tb) = (self.value(*a).data(), self.value(*b).data());
                let s = ta.iter().zip(tb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
                Ok(Tensor::scalar(s / ta.len() as f64))
            }
            Op::NegDistSoftmax { z, exemplars } => {
                let zt = self.value(*z).data();
                let logits: Vec<f64> = exemplars
                    .iter()
                    .map(|&e| -zt.iter().zip(self.value(e).data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                    .collect();
                let p = softmax(&logits);
                Tensor::new(vec![p.len()], p)
            }
            Op::Nll { p, label } => Ok(Tensor::scalar(-self.value(*p).data()[*label].max(PROB_FLOOR).ln())),
        }
    }

    /// Replaces the value of leaf `v` and recomputes every node downstream of
    /// it, leaving the rest of the tape untouched. Accumulated gradients are
    /// cleared.
    pub fn set_leaf(&mut self, v: Var, t: Tensor) -> Result<()> {
        let node = &self.nodes[v.0];
        if !matches!(node.op, Op::Leaf) {
            return Err(Error::Shape(format!("node {} is not a leaf", v.0)));
        }
        if node.value.shape() != t.shape() {
            return Err(Error::Shape(format!("leaf shape {:?} vs {:?}", node.value.shape(), t.shape())));
        }
        self.nodes[v.0].value = t;
        self.zero_grad();
        let mut dirty = vec![false; self.nodes.len()];
        dirty[v.0] = true;
        for i in v.0 + 1..self.nodes.len() {
            if !op_inputs(&self.nodes[i].op).iter().any(|u| dirty[u.0]) {
                continue;
            }
            dirty[i] = true;
            let shape = self.nodes[i].value.shape().to_vec();
            let value = if let Op::MaxPool { x, .. } = self.nodes[i].op {
                let (t, arg) = kernels::maxpool3d(self.value(x))?;
                self.nodes[i].op = Op::MaxPool { x, argmax: Arc::new(arg) };
                t
            } else {
                self.forward(&self.nodes[i].op, &shape)?
            };
            value.check_finite(op_name(&self.nodes[i].op))?;
            self.nodes[i].value = value;
        }
        Ok(())
    }

    /// Backpropagates from the scalar `loss`, adding gradients into every
    /// reachable leaf that requires grad. Calling it twice accumulates.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(Error::NotScalar(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    None => node.grad = Some(g),
                }
                continue;
            }
            for (input, gin) in self.input_grads(i, &g)? {
                if !self.rg(input) {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.iter_mut().zip(&gin).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(gin),
                }
            }
        }
        for (i, n) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if let Some(g) = &n.grad {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric(format!("gradient of node {i}")));
                }
            }
        }
        Ok(())
    }

    fn input_grads(&self, i: usize, g: &[f64]) -> Result<Vec<(Var, Vec<f64>)>> {
        let node = &self.nodes[i];
        let exec = self.exec;
        Ok(match &node.op {
            Op::Leaf => Vec::new(),
            Op::Add(a, b) => vec![(*a, g.to_vec()), (*b, g.to_vec())],
            Op::Scale(a, s) => vec![(*a, g.iter().map(|v| v * s).collect())],
            Op::Relu(a) => {
                let x = self.value(*a).data();
                vec![(*a, g.iter().zip(x).map(|(&gv, &xv)| if xv > 0.0 { gv } else { 0.0 }).collect())]
            }
            Op::Reshape(a) => vec![(*a, g.to_vec())],
            Op::Sum(a) => vec![(*a, vec![g[0]; self.value(*a).len()])],
            Op::Conv { x, w, b, stride, pad } => {
                let gy = Tensor::new(node.value.shape().to_vec(), g.to_vec())?;
                let xt = self.value(*x);
                let wt = self.value(*w);
                let (_, ins) = xt.dims4("conv input")?;
                let k = wt.shape()[2];
                let mut out = Vec::with_capacity(3);
                if self.rg(*x) {
                    let gx = kernels::conv3d_backward_input(&gy, wt, *stride, *pad, ins, exec)?;
                    out.push((*x, gx.into_data()));
                }
                if self.rg(*w) {
                    let gw = kernels::conv3d_backward_weight(xt, &gy, *stride, *pad, k, exec)?;
                    out.push((*w, gw.into_data()));
                }
                if let Some(b) = b {
                    out.push((*b, kernels::channel_sums(&gy).into_data()));
                }
                out
            }
            Op::Deconv { x, w, b, stride, pad } => {
                let gy = Tensor::new(node.value.shape().to_vec(), g.to_vec())?;
                let xt = self.value(*x);
                let wt = self.value(*w);
                let k = wt.shape()[2];
                let mut out = Vec::with_capacity(3);
                if self.rg(*x) {
                    let gx = kernels::conv3d_forward(&gy, wt, None, *stride, *pad, exec)?;
                    out.push((*x, gx.into_data()));
                }
                if self.rg(*w) {
                    let gw = kernels::conv3d_backward_weight(&gy, xt, *stride, *pad, k, exec)?;
                    out.push((*w, gw.into_data()));
                }
                if let Some(b) = b {
                    out.push((*b, kernels::channel_sums(&gy).into_data()));
                }
                out
            }
            Op::MaxPool { x, argmax } => {
                let mut gx = vec![0.0; self.value(*x).len()];
                for (&j, gv) in argmax.iter().zip(g) {
                    gx[j] += gv;
                }
                vec![(*x, gx)]
            }
            Op::Unpool { x, indices } => vec![(*x, indices.iter().map(|&j| g[j]).collect())],
            Op::MeanSquaredError(a, b) => {
                let (ta, tb) = (self.value(*a).data(), self.value(*b).data());
                let c = 2.0 * g[0] / ta.len() as f64;
                let ga: Vec<f64> = ta.iter().zip(tb).map(|(x, y)| c * (x - y)).collect();
                let gb = ga.iter().map(|v| -v).collect();
                vec![(*a, ga), (*b, gb)]
            }
            Op::NegDistSoftmax { z, exemplars } => {
                let p = node.value.data();
                let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
                let zt = self.value(*z).data();
                let mut gz = vec![0.0; zt.len()];
                let mut out = Vec::with_capacity(exemplars.len() + 1);
                for (i, &e) in exemplars.iter().enumerate() {
                    // dL/dd_i, with d_i = |z - e_i|^2 and logits = -d.
                    let gd = -p[i] * (g[i] - dot);
                    let et = self.value(e).data();
                    let ge: Vec<f64> = zt.iter().zip(et).map(|(a, b)| -2.0 * gd * (a - b)).collect();
                    gz.iter_mut().zip(&ge).for_each(|(acc, v)| *acc -= v);
                    out.push((e, ge));
                }
                out.push((*z, gz));
                out
            }
            Op::Nll { p, label } => {
                let pv = self.value(*p).data();
                let mut gp = vec![0.0; pv.len()];
                if pv[*label] > PROB_FLOOR {
                    gp[*label] = -g[0] / pv[*label];
                }
                vec![(*p, gp)]
            }
        })
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn op_inputs(op: &Op) -> Vec<Var> {
    match op {
        Op::Leaf => Vec::new(),
        Op::Add(a, b) | Op::MeanSquaredError(a, b) => vec![*a, *b],
        Op::Scale(a, _) | Op::Relu(a) | Op::Reshape(a) | Op::Sum(a) => vec![*a],
        Op::Conv { x, w, b, .. } | Op::Deconv { x, w, b, .. } => [Some(*x), Some(*w), *b].into_iter().flatten().collect(),
        Op::MaxPool { x, .. } | Op::Unpool { x, .. } => vec![*x],
        Op::NegDistSoftmax { z, exemplars } => std::iter::once(*z).chain(exemplars.iter().copied()).collect(),
        Op::Nll { p, .. } => vec![*p],
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Add(..) => "add",
        Op::Scale(..) => "scale",
        Op::Relu(_) => "relu",
        Op::Reshape(_) => "reshape",
        Op::Sum(_) => "sum",
        Op::Conv { .. } => "conv3d",
        Op::Deconv { .. } => "deconv3d",
        Op::MaxPool { .. } => "maxpool3d",
        Op::Unpool { .. } => "maxunpool3d",
        Op::MeanSquaredError(..) => "mse",
        Op::NegDistSoftmax { .. } => "embedded similarity",
        Op::Nll { .. } => "nll",
    }
}
