//! Tape-based reverse-mode differentiation over dense tensors.
//!
//! Every operation appends a node to the tape, so node ids are already a
//! topological order: backward walks ids in reverse and each consumer is
//! visited before its producers. Fan-out is handled by summing adjoints.

use std::cell::{Cell, Ref, RefCell};

use super::tensor::{split_axis, Tensor};
use super::AutodiffError;

const GROUP_NORM_EPS: f64 = 1e-5;

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MulScalar { arr: usize, s: usize },
    Scale(usize, f64),
    MatMul(usize, usize),
    Transpose(usize),
    Relu(usize),
    Softmax(usize),
    SmoothL1 { a: usize, b: usize, beta: f64 },
    Hinge { a: usize, b: usize, margin: f64 },
    GroupNorm { x: usize, groups: usize, inv_std: Vec<f64> },
    Concat { inputs: Vec<usize>, axis: usize },
    Gather { x: usize, axis: usize, indices: Vec<usize> },
    Reshape(usize),
    ReduceSum(usize),
    ReduceMean(usize),
    Sqrt(usize),
    Exp(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Record of one forward evaluation. Single use: `backward` may run once.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    consumed: Cell<bool>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `v`; zeros when no path reaches it.
    pub fn get(&self, v: Var<'_>) -> Tensor {
        let shape = self.shapes[v.id].clone();
        match &self.adjoints[v.id] {
            Some(a) => Tensor::from_parts(shape, a.clone()),
            None => Tensor::zeros(&shape),
        }
    }

    pub fn has_path(&self, v: Var<'_>) -> bool {
        self.adjoints[v.id].is_some()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Differentiable input.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&self, v: f64) -> Var<'_> {
        self.constant(Tensor::scalar(v))
    }

    fn requires(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    /// Reverse pass from a scalar. Rejects a second call on the same tape.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients, AutodiffError> {
        if self.consumed.replace(true) {
            return Err(AutodiffError::BackwardTwice);
        }
        let nodes = self.nodes.borrow();
        let loss_node = &nodes[loss.id];
        if loss_node.value.numel() != 1 {
            return Err(AutodiffError::NotScalar(loss_node.value.shape().to_vec()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        adj[loss.id] = Some(vec![1.0]);

        for id in (0..=loss.id).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &nodes[id];
            if node.requires_grad {
                backprop(&nodes, node, &g, &mut adj);
            }
            adj[id] = Some(g);
        }
        Ok(Gradients {
            adjoints: adj,
            shapes: nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }
}

fn accumulate(nodes: &[Node], adj: &mut [Option<Vec<f64>>], id: usize, f: impl FnOnce(&mut [f64])) {
    if !nodes[id].requires_grad {
        return;
    }
    let slot = adj[id].get_or_insert_with(|| vec![0.0; nodes[id].value.numel()]);
    f(slot);
}

fn matmul_into(a: &[f64], b: &[f64], rows: usize, k: usize, m: usize) -> Vec<f64> {
    let mut c = vec![0.0; rows * m];
    for i in 0..rows {
        let crow = &mut c[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (cj, bj) in crow.iter_mut().zip(brow) {
                *cj += av * bj;
            }
        }
    }
    c
}

fn backprop(nodes: &[Node], node: &Node, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate(nodes, adj, *a, |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            accumulate(nodes, adj, *b, |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y));
        }
        Op::Sub(a, b) => {
            accumulate(nodes, adj, *a, |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            accumulate(nodes, adj, *b, |s| s.iter_mut().zip(g).for_each(|(x, y)| *x -= y));
        }
        Op::Mul(a, b) => {
            let av = nodes[*a].value.data();
            let bv = nodes[*b].value.data();
            accumulate(nodes, adj, *a, |s| {
                for ((x, gi), bi) in s.iter_mut().zip(g).zip(bv) {
                    *x += gi * bi;
                }
            });
            accumulate(nodes, adj, *b, |s| {
                for ((x, gi), ai) in s.iter_mut().zip(g).zip(av) {
                    *x += gi * ai;
                }
            });
        }
        Op::MulScalar { arr, s: sc } => {
            let scalar = nodes[*sc].value.data()[0];
            let av = nodes[*arr].value.data();
            accumulate(nodes, adj, *arr, |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y * scalar));
            let dot: f64 = g.iter().zip(av).map(|(a, b)| a * b).sum();
            accumulate(nodes, adj, *sc, |s| s[0] += dot);
        }
        Op::Scale(a, c) => {
            accumulate(nodes, adj, *a, |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y * c));
        }
        Op::MatMul(a, b) => {
            let at = &nodes[*a].value;
            let bt = &nodes[*b].value;
            let k = bt.shape()[0];
            let m = bt.shape()[1];
            let rows = at.numel() / k;
            let (ad, bd) = (at.data(), bt.data());
            accumulate(nodes, adj, *a, |s| {
                for i in 0..rows {
                    let grow = &g[i * m..(i + 1) * m];
                    for p in 0..k {
                        let brow = &bd[p * m..(p + 1) * m];
                        s[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
            });
            accumulate(nodes, adj, *b, |s| {
                for i in 0..rows {
                    let grow = &g[i * m..(i + 1) * m];
                    for p in 0..k {
                        let av = ad[i * k + p];
                        if av == 0.0 {
                            continue;
                        }
                        let srow = &mut s[p * m..(p + 1) * m];
                        for (x, y) in srow.iter_mut().zip(grow) {
                            *x += av * y;
                        }
                    }
                }
            });
        }
        Op::Transpose(a) => {
            let sh = nodes[*a].value.shape();
            let (r, c) = (sh[0], sh[1]);
            accumulate(nodes, adj, *a, |s| {
                for i in 0..r {
                    for j in 0..c {
                        s[i * c + j] += g[j * r + i];
                    }
                }
            });
        }
        Op::Relu(a) => {
            let av = nodes[*a].value.data();
            accumulate(nodes, adj, *a, |s| {
                for ((x, gi), ai) in s.iter_mut().zip(g).zip(av) {
                    if *ai > 0.0 {
                        *x += gi;
                    }
                }
            });
        }
        Op::Softmax(a) => {
            let y = node.value.data();
            let cols = *node.value.shape().last().unwrap_or(&1);
            accumulate(nodes, adj, *a, |s| {
                for r in 0..y.len() / cols {
                    let span = r * cols..(r + 1) * cols;
                    let dot: f64 = g[span.clone()].iter().zip(&y[span.clone()]).map(|(a, b)| a * b).sum();
                    for j in span {
                        s[j] += y[j] * (g[j] - dot);
                    }
                }
            });
        }
        Op::SmoothL1 { a, b, beta } => {
            let av = nodes[*a].value.data();
            let bv = nodes[*b].value.data();
            let deriv: Vec<f64> = av
                .iter()
                .zip(bv)
                .zip(g)
                .map(|((x, y), gi)| {
                    let d = x - y;
                    gi * if d.abs() < *beta { d / beta } else { d.signum() }
                })
                .collect();
            accumulate(nodes, adj, *a, |s| s.iter_mut().zip(&deriv).for_each(|(x, y)| *x += y));
            accumulate(nodes, adj, *b, |s| s.iter_mut().zip(&deriv).for_each(|(x, y)| *x -= y));
        }
        Op::Hinge { a, b, margin } => {
            let av = nodes[*a].value.data();
            let bv = nodes[*b].value.data();
            let active: Vec<f64> = av
                .iter()
                .zip(bv)
                .zip(g)
                .map(|((x, y), gi)| if x + margin - y > 0.0 { *gi } else { 0.0 })
                .collect();
            accumulate(nodes, adj, *a, |s| s.iter_mut().zip(&active).for_each(|(x, y)| *x += y));
            accumulate(nodes, adj, *b, |s| s.iter_mut().zip(&active).for_each(|(x, y)| *x -= y));
        }
        Op::GroupNorm { x, groups, inv_std } => {
            let y = node.value.data();
            let c = *node.value.shape().last().unwrap();
            let gs = c / groups;
            accumulate(nodes, adj, *x, |s| {
                for (gi, chunk) in (0..y.len()).step_by(gs).enumerate() {
                    let span = chunk..chunk + gs;
                    let inv = inv_std[gi];
                    let mean_g: f64 = g[span.clone()].iter().sum::<f64>() / gs as f64;
                    let mean_gy: f64 = g[span.clone()]
                        .iter()
                        .zip(&y[span.clone()])
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        / gs as f64;
                    for j in span {
                        s[j] += inv * (g[j] - mean_g - y[j] * mean_gy);
                    }
                }
            });
        }
        Op::Concat { inputs, axis } => {
            let out_shape = node.value.shape();
            let (outer, _, inner) = split_axis(out_shape, *axis);
            let total = out_shape[*axis];
            let mut offset = 0;
            for &inp in inputs {
                let len = nodes[inp].value.shape()[*axis];
                accumulate(nodes, adj, inp, |s| {
                    for o in 0..outer {
                        let src = &g[(o * total + offset) * inner..(o * total + offset + len) * inner];
                        let dst = &mut s[o * len * inner..(o + 1) * len * inner];
                        dst.iter_mut().zip(src).for_each(|(x, y)| *x += y);
                    }
                });
                offset += len;
            }
        }
        Op::Gather { x, axis, indices } => {
            let (outer, len, inner) = split_axis(nodes[*x].value.shape(), *axis);
            let k = indices.len();
            accumulate(nodes, adj, *x, |s| {
                for o in 0..outer {
                    for (j, &idx) in indices.iter().enumerate() {
                        let src = &g[(o * k + j) * inner..(o * k + j + 1) * inner];
                        let dst = &mut s[(o * len + idx) * inner..(o * len + idx + 1) * inner];
                        dst.iter_mut().zip(src).for_each(|(x, y)| *x += y);
                    }
                }
            });
        }
        Op::Reshape(a) => {
            accumulate(nodes, adj, *a, |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y));
        }
        Op::ReduceSum(a) => {
            accumulate(nodes, adj, *a, |s| s.iter_mut().for_each(|x| *x += g[0]));
        }
        Op::ReduceMean(a) => {
            let n = nodes[*a].value.numel() as f64;
            accumulate(nodes, adj, *a, |s| s.iter_mut().for_each(|x| *x += g[0] / n));
        }
        Op::Sqrt(a) => {
            let y = node.value.data();
            accumulate(nodes, adj, *a, |s| {
                for ((x, gi), yi) in s.iter_mut().zip(g).zip(y) {
                    *x += gi * 0.5 / yi;
                }
            });
        }
        Op::Exp(a) => {
            let y = node.value.data();
            accumulate(nodes, adj, *a, |s| {
                for ((x, gi), yi) in s.iter_mut().zip(g).zip(y) {
                    *x += gi * yi;
                }
            });
        }
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Borrow of the forward value.
    pub fn value(&self) -> Ref<'t, Tensor> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }

    pub fn to_tensor(&self) -> Tensor {
        self.value().clone()
    }

    fn same_shape(&self, other: Var<'t>, op: &'static str) -> Result<(), AutodiffError> {
        let (l, r) = (self.shape(), other.shape());
        if l != r {
            return Err(AutodiffError::ShapeMismatch { op, left: l, right: r });
        }
        Ok(())
    }

    fn elementwise2(
        self,
        other: Var<'t>,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var<'t>, AutodiffError> {
        self.same_shape(other, name)?;
        let value = {
            let a = self.value();
            let b = other.value();
            let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
            Tensor::from_parts(a.shape().to_vec(), data)
        };
        let rg = self.tape.requires(&[self.id, other.id]);
        Ok(self.tape.push(value, op, rg))
    }

    fn map1(self, f: impl Fn(f64) -> f64, op: Op) -> Var<'t> {
        let value = {
            let a = self.value();
            Tensor::from_parts(a.shape().to_vec(), a.data().iter().map(|x| f(*x)).collect())
        };
        let rg = self.tape.requires(&[self.id]);
        self.tape.push(value, op, rg)
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>, AutodiffError> {
        self.elementwise2(other, "add", |a, b| a + b, Op::Add(self.id, other.id))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>, AutodiffError> {
        self.elementwise2(other, "sub", |a, b| a - b, Op::Sub(self.id, other.id))
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>, AutodiffError> {
        self.elementwise2(other, "mul", |a, b| a * b, Op::Mul(self.id, other.id))
    }

    /// Array times a one-element tensor (the only broadcast supported).
    pub fn mul_scalar(self, scalar: Var<'t>) -> Result<Var<'t>, AutodiffError> {
        let s_shape = scalar.shape();
        if s_shape.iter().product::<usize>() != 1 {
            return Err(AutodiffError::ShapeMismatch {
                op: "mul_scalar",
                left: self.shape(),
                right: s_shape,
            });
        }
        let s = scalar.item();
        let value = {
            let a = self.value();
            Tensor::from_parts(a.shape().to_vec(), a.data().iter().map(|x| x * s).collect())
        };
        let rg = self.tape.requires(&[self.id, scalar.id]);
        Ok(self.tape.push(
            value,
            Op::MulScalar {
                arr: self.id,
                s: scalar.id,
            },
            rg,
        ))
    }

    /// Multiplication by a constant.
    pub fn scale(self, c: f64) -> Var<'t> {
        self.map1(|x| x * c, Op::Scale(self.id, c))
    }

    /// `[.., k] x [k, m] -> [.., m]`; a rank-3 left side shares the right matrix.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>, AutodiffError> {
        let (ls, rs) = (self.shape(), other.shape());
        if ls.len() < 2 || rs.len() != 2 || ls[ls.len() - 1] != rs[0] {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                left: ls,
                right: rs,
            });
        }
        let (k, m) = (rs[0], rs[1]);
        let value = {
            let a = self.value();
            let b = other.value();
            let rows = a.numel() / k;
            let data = matmul_into(a.data(), b.data(), rows, k, m);
            let mut shape = ls.clone();
            *shape.last_mut().unwrap() = m;
            Tensor::from_parts(shape, data)
        };
        let rg = self.tape.requires(&[self.id, other.id]);
        Ok(self.tape.push(value, Op::MatMul(self.id, other.id), rg))
    }

    pub fn transpose(self) -> Result<Var<'t>, AutodiffError> {
        let sh = self.shape();
        if sh.len() != 2 {
            return Err(AutodiffError::Rank(sh));
        }
        let (r, c) = (sh[0], sh[1]);
        let value = {
            let a = self.value();
            let d = a.data();
            let mut out = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    out[j * r + i] = d[i * c + j];
                }
            }
            Tensor::from_parts(vec![c, r], out)
        };
        let rg = self.tape.requires(&[self.id]);
        Ok(self.tape.push(value, Op::Transpose(self.id), rg))
    }

    pub fn relu(self) -> Var<'t> {
        self.map1(|x| x.max(0.0), Op::Relu(self.id))
    }

    pub fn sqrt(self) -> Var<'t> {
        self.map1(f64::sqrt, Op::Sqrt(self.id))
    }

    pub fn exp(self) -> Var<'t> {
        self.map1(f64::exp, Op::Exp(self.id))
    }

    /// Softmax along the last axis.
    pub fn softmax(self) -> Var<'t> {
        let value = {
            let a = self.value();
            let cols = *a.shape().last().unwrap_or(&1);
            let mut out = a.data().to_vec();
            for row in out.chunks_mut(cols) {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                row.iter_mut().for_each(|v| *v /= sum);
            }
            Tensor::from_parts(a.shape().to_vec(), out)
        };
        let rg = self.tape.requires(&[self.id]);
        self.tape.push(value, Op::Softmax(self.id), rg)
    }

    /// Elementwise smooth L1 between `self` and `target`: `0.5 d^2 / beta`
    /// below `beta`, `|d| - 0.5 beta` above.
    pub fn smooth_l1(self, target: Var<'t>, beta: f64) -> Result<Var<'t>, AutodiffError> {
        self.elementwise2(
            target,
            "smooth_l1",
            move |a, b| {
                let d = (a - b).abs();
                if d < beta {
                    0.5 * d * d / beta
                } else {
                    d - 0.5 * beta
                }
            },
            Op::SmoothL1 {
                a: self.id,
                b: target.id,
                beta,
            },
        )
    }

    /// Elementwise `max(0, self + margin - other)`.
    pub fn hinge(self, other: Var<'t>, margin: f64) -> Result<Var<'t>, AutodiffError> {
        self.elementwise2(
            other,
            "hinge",
            move |a, b| (a + margin - b).max(0.0),
            Op::Hinge {
                a: self.id,
                b: other.id,
                margin,
            },
        )
    }

    /// Normalizes groups of the last axis to zero mean and unit variance.
    pub fn group_norm(self, groups: usize) -> Result<Var<'t>, AutodiffError> {
        let sh = self.shape();
        let c = *sh.last().ok_or(AutodiffError::Rank(sh.clone()))?;
        if groups == 0 || c % groups != 0 {
            return Err(AutodiffError::Groups { channels: c, groups });
        }
        let gs = c / groups;
        let (value, inv_std) = {
            let a = self.value();
            let mut out = a.data().to_vec();
            let mut inv_std = Vec::with_capacity(out.len() / gs);
            for chunk in out.chunks_mut(gs) {
                let mean = chunk.iter().sum::<f64>() / gs as f64;
                let var = chunk.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / gs as f64;
                let inv = 1.0 / (var + GROUP_NORM_EPS).sqrt();
                chunk.iter_mut().for_each(|v| *v = (*v - mean) * inv);
                inv_std.push(inv);
            }
            (Tensor::from_parts(sh, out), inv_std)
        };
        let rg = self.tape.requires(&[self.id]);
        Ok(self.tape.push(
            value,
            Op::GroupNorm {
                x: self.id,
                groups,
                inv_std,
            },
            rg,
        ))
    }

    /// Indices along `axis`, in the given order (repeats allowed).
    pub fn gather(self, axis: usize, indices: &[usize]) -> Result<Var<'t>, AutodiffError> {
        let sh = self.shape();
        if axis >= sh.len() {
            return Err(AutodiffError::Axis { axis, shape: sh });
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= sh[axis]) {
            return Err(AutodiffError::Index { index: bad, shape: sh });
        }
        let (outer, len, inner) = split_axis(&sh, axis);
        let value = {
            let a = self.value();
            let d = a.data();
            let mut out = Vec::with_capacity(outer * indices.len() * inner);
            for o in 0..outer {
                for &idx in indices {
                    out.extend_from_slice(&d[(o * len + idx) * inner..(o * len + idx + 1) * inner]);
                }
            }
            let mut shape = sh.clone();
            shape[axis] = indices.len();
            Tensor::from_parts(shape, out)
        };
        let rg = self.tape.requires(&[self.id]);
        Ok(self.tape.push(
            value,
            Op::Gather {
                x: self.id,
                axis,
                indices: indices.to_vec(),
            },
            rg,
        ))
    }

    /// Contiguous range `[start, end)` along `axis`.
    pub fn slice(self, axis: usize, start: usize, end: usize) -> Result<Var<'t>, AutodiffError> {
        let idx: Vec<usize> = (start..end).collect();
        if start >= end {
            return Err(AutodiffError::Index {
                index: start,
                shape: self.shape(),
            });
        }
        self.gather(axis, &idx)
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>, AutodiffError> {
        let cur = self.shape();
        if shape.len() > 3 || shape.iter().product::<usize>() != cur.iter().product::<usize>() {
            return Err(AutodiffError::ShapeMismatch {
                op: "reshape",
                left: cur,
                right: shape.to_vec(),
            });
        }
        let value = Tensor::from_parts(shape.to_vec(), self.value().data().to_vec());
        let rg = self.tape.requires(&[self.id]);
        Ok(self.tape.push(value, Op::Reshape(self.id), rg))
    }

    pub fn reduce_sum(self) -> Var<'t> {
        let v = self.value().data().iter().sum::<f64>();
        let rg = self.tape.requires(&[self.id]);
        self.tape.push(Tensor::scalar(v), Op::ReduceSum(self.id), rg)
    }

    pub fn reduce_mean(self) -> Var<'t> {
        let v = {
            let a = self.value();
            a.data().iter().sum::<f64>() / a.numel() as f64
        };
        let rg = self.tape.requires(&[self.id]);
        self.tape.push(Tensor::scalar(v), Op::ReduceMean(self.id), rg)
    }
}

/// Concatenates along `axis`; all other extents must agree.
pub fn concat<'t>(inputs: &[Var<'t>], axis: usize) -> Result<Var<'t>, AutodiffError> {
    let first = inputs.first().ok_or(AutodiffError::Empty("concat"))?;
    let tape = first.tape;
    let base = first.shape();
    if axis >= base.len() {
        return Err(AutodiffError::Axis { axis, shape: base });
    }
    let mut total = 0;
    for v in inputs {
        let s = v.shape();
        let compatible = s.len() == base.len()
            && s.iter()
                .zip(&base)
                .enumerate()
                .all(|(i, (a, b))| i == axis || a == b);
        if !compatible {
            return Err(AutodiffError::ShapeMismatch {
                op: "concat",
                left: base,
                right: s,
            });
        }
        total += s[axis];
    }
    let (outer, _, inner) = split_axis(&base, axis);
    let value = {
        let vals: Vec<Ref<'t, Tensor>> = inputs.iter().map(|v| v.value()).collect();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in &vals {
                let len = v.shape()[axis];
                out.extend_from_slice(&v.data()[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = base.clone();
        shape[axis] = total;
        Tensor::from_parts(shape, out)
    };
    let ids: Vec<usize> = inputs.iter().map(|v| v.id).collect();
    let rg = tape.requires(&ids);
    Ok(tape.push(value, Op::Concat { inputs: ids, axis }, rg))
}

/// Sum of several same-shaped vars.
pub fn sum_all<'t>(vars: &[Var<'t>]) -> Result<Var<'t>, AutodiffError> {
    let (first, rest) = vars.split_first().ok_or(AutodiffError::Empty("sum_all"))?;
    rest.iter().try_fold(*first, |acc, v| acc.add(*v))
}
