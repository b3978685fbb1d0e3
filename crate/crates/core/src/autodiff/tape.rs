//! Append-only reverse-mode tape over [`Tensor4`] values.
//!
//! Every operation evaluates eagerly through the kernels in [`crate::ops`]
//! and records its inputs plus whatever forward context its backward rule
//! needs. [`Tape::backward`] sweeps the nodes in reverse append order, which
//! is a valid reverse topological order because inputs always precede the
//! nodes that consume them.

use crate::error::{Error, Result};
use crate::ops::{self, ConvSpec};
use crate::ops::matmul::gemm;
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor4};

/// Handle to a value on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VarId {
    index: usize,
    requires_grad: bool,
}

impl VarId {
    pub fn index(self) -> usize {
        self.index
    }

    pub fn requires_grad(self) -> bool {
        self.requires_grad
    }
}

/// Differentiable operation kinds and their attributes.
#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    /// `a + b`, equal dims.
    Add,
    /// `a + b` where every extent of `b` equals that of `a` or is 1.
    AddBroadcast,
    /// `a ⊙ b` with `b` broadcast as in [`OpKind::AddBroadcast`].
    Mul,
    /// `s · x` for a learnable one-element `s`; inputs `[s, x]`.
    ScalarMul,
    /// Multiplication by a fixed constant.
    Scale(f64),
    /// Per-group `op(A) · op(B)` over the last two axes.
    Matmul { ta: bool, tb: bool },
    /// Inputs `[x, weight]` or `[x, weight, bias]`.
    Conv2d(ConvSpec),
    Relu,
    Sigmoid,
    Softmax { axis: usize },
    /// Element-wise mean of any number of equally shaped inputs.
    MeanList,
    /// Mean over the flagged axes, kept with extent 1.
    MeanAxes([bool; 4]),
    /// Sum of every element into a scalar.
    SumAll,
    MaxPool2x2,
    GlobalAvgPool,
    BilinearResize { h: usize, w: usize },
    /// `(b, c, h, w)` flattened to `(b, c·h·w)`, times `weightᵀ` with
    /// weight `(out, in, 1, 1)`, plus optional bias `(1, out, 1, 1)`.
    Linear,
    Reshape(Dims),
    TransposeLast2,
    SliceChannels { start: usize, len: usize },
    /// Mean negative log-likelihood of `labels` under softmax of
    /// `(b, k, 1, 1)` logits.
    CrossEntropy { labels: Vec<usize> },
}

enum Saved<T> {
    Nothing,
    Argmax(Vec<usize>),
    Probs(Tensor4<T>),
}

struct Node<T> {
    kind: Option<OpKind>,
    inputs: Vec<VarId>,
    value: Tensor4<T>,
    saved: Saved<T>,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
}

/// Gradient table produced by a backward sweep. Nodes that do not require
/// gradients, or that the loss does not depend on, have no entry.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor4<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, id: VarId) -> Option<&Tensor4<T>> {
        self.grads.get(id.index).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: VarId) -> Option<Tensor4<T>> {
        self.grads.get_mut(id.index).and_then(|g| g.take())
    }

    pub fn contains(&self, id: VarId) -> bool {
        self.get(id).is_some()
    }
}

fn broadcast_ok(a: Dims, b: Dims) -> bool {
    a.to_array()
        .iter()
        .zip(b.to_array())
        .all(|(&x, y)| y == x || y == 1)
}

/// Offsets into a broadcast operand `b` for every element of `a`'s dims.
fn broadcast_offsets(a: Dims, b: Dims) -> Vec<usize> {
    let stride = |axis: usize, s: usize| if b.extent(axis) == 1 { 0 } else { s };
    let sw = stride(3, 1);
    let sh = stride(2, b.w);
    let sc = stride(1, b.w * b.h);
    let sb = stride(0, b.w * b.h * b.c);
    let mut out = Vec::with_capacity(a.len());
    for i in 0..a.b {
        for j in 0..a.c {
            for k in 0..a.h {
                for l in 0..a.w {
                    out.push(i * sb + j * sc + k * sh + l * sw);
                }
            }
        }
    }
    out
}

/// Sums `g` (dims of `a`) down onto the broadcast dims `b`.
fn reduce_to<T: Scalar>(g: &Tensor4<T>, b: Dims) -> Tensor4<T> {
    if g.dims() == b {
        return g.clone();
    }
    let mut out = Tensor4::zeros(b);
    let od = out.data_mut();
    for (&v, o) in g.data().iter().zip(broadcast_offsets(g.dims(), b)) {
        od[o] += v;
    }
    out
}

fn arity(kind: &OpKind, n: usize) -> Result<()> {
    let ok = match kind {
        OpKind::Add
        | OpKind::AddBroadcast
        | OpKind::Mul
        | OpKind::ScalarMul
        | OpKind::Matmul { .. } => n == 2,
        OpKind::Conv2d(_) | OpKind::Linear => n == 2 || n == 3,
        OpKind::MeanList => n >= 1,
        _ => n == 1,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::shape(format!("{kind:?} cannot take {n} inputs")))
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf value.
    pub fn var(&mut self, value: Tensor4<T>, requires_grad: bool) -> VarId {
        self.push(None, Vec::new(), value, Saved::Nothing, requires_grad)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor4<T>) -> VarId {
        self.var(value, false)
    }

    pub fn value(&self, id: VarId) -> &Tensor4<T> {
        &self.nodes[id.index].value
    }

    fn push(
        &mut self,
        kind: Option<OpKind>,
        inputs: Vec<VarId>,
        value: Tensor4<T>,
        saved: Saved<T>,
        requires_grad: bool,
    ) -> VarId {
        let index = self.nodes.len();
        self.nodes.push(Node {
            kind,
            inputs,
            value,
            saved,
            requires_grad,
        });
        VarId {
            index,
            requires_grad,
        }
    }

    fn check_id(&self, id: VarId) -> Result<()> {
        if id.index >= self.nodes.len() {
            return Err(Error::shape(format!(
                "var {} not on this tape ({} nodes)",
                id.index,
                self.nodes.len()
            )));
        }
        Ok(())
    }

    /// Evaluates `kind` on `inputs` and records the result.
    pub fn apply(&mut self, kind: OpKind, inputs: &[VarId]) -> Result<VarId> {
        arity(&kind, inputs.len())?;
        for &id in inputs {
            self.check_id(id)?;
        }
        let (value, saved) = self.forward(&kind, inputs)?;
        if !value.all_finite() {
            return Err(Error::NonFinite(format!("output of {kind:?}")));
        }
        let requires_grad = inputs.iter().any(|id| self.nodes[id.index].requires_grad);
        Ok(self.push(Some(kind), inputs.to_vec(), value, saved, requires_grad))
    }

    fn forward(&self, kind: &OpKind, inputs: &[VarId]) -> Result<(Tensor4<T>, Saved<T>)> {
        let v = |i: usize| &self.nodes[inputs[i].index].value;
        let plain = |t: Tensor4<T>| Ok((t, Saved::Nothing));
        match kind {
            OpKind::Add => plain(v(0).zip_map(v(1), |a, b| a + b)?),
            OpKind::AddBroadcast | OpKind::Mul => {
                let (a, b) = (v(0), v(1));
                if !broadcast_ok(a.dims(), b.dims()) {
                    return Err(Error::shape(format!(
                        "{:?} does not broadcast onto {:?}",
                        b.dims(),
                        a.dims()
                    )));
                }
                let mul = matches!(kind, OpKind::Mul);
                let bd = b.data();
                let data = a
                    .data()
                    .iter()
                    .zip(broadcast_offsets(a.dims(), b.dims()))
                    .map(|(&x, o)| if mul { x * bd[o] } else { x + bd[o] })
                    .collect();
                plain(Tensor4::from_vec(a.dims(), data)?)
            }
            OpKind::ScalarMul => {
                let s = v(0);
                if s.len() != 1 {
                    return Err(Error::shape(format!("scalar_mul scale has dims {:?}", s.dims())));
                }
                let s = s.data()[0];
                plain(v(1).map(|x| s * x))
            }
            OpKind::Scale(c) => {
                let c = T::from_f64(*c);
                plain(v(0).map(|x| c * x))
            }
            OpKind::Matmul { ta, tb } => plain(ops::matmul_batched(v(0), v(1), *ta, *tb)?),
            OpKind::Conv2d(spec) => {
                let bias = inputs.get(2).map(|id| &self.nodes[id.index].value);
                plain(ops::conv2d_im2col(v(0), v(1), bias, *spec)?)
            }
            OpKind::Relu => plain(v(0).map(|x| if x > T::zero() { x } else { T::zero() })),
            OpKind::Sigmoid => plain(v(0).map(|x| T::one() / (T::one() + (-x).exp()))),
            OpKind::Softmax { axis } => plain(ops::softmax_axis(v(0), *axis)?),
            OpKind::MeanList => {
                // Running mean m += (x_k - m) / k: exact when all inputs agree.
                let mut acc = v(0).clone();
                for i in 1..inputs.len() {
                    let k = T::from_f64((i + 1) as f64);
                    acc = acc.zip_map(v(i), |m, x| m + (x - m) / k)?;
                }
                plain(acc)
            }
            OpKind::MeanAxes(flags) => {
                let axes: Vec<usize> = (0..4).filter(|&a| flags[a]).collect();
                plain(ops::reduce_mean(v(0), &axes)?)
            }
            OpKind::SumAll => plain(Tensor4::scalar(v(0).sum())),
            OpKind::MaxPool2x2 => {
                let (out, arg) = ops::maxpool2x2(v(0))?;
                Ok((out, Saved::Argmax(arg)))
            }
            OpKind::GlobalAvgPool => plain(ops::global_avg_pool(v(0))?),
            OpKind::BilinearResize { h, w } => plain(ops::bilinear_resize(v(0), *h, *w)?),
            OpKind::Linear => {
                let (x, wt) = (v(0), v(1));
                let (n, fin) = (x.dims().b, x.dims().c * x.dims().plane());
                let wd = wt.dims();
                if wd.c * wd.plane() != fin {
                    return Err(Error::shape(format!(
                        "linear weight {wd:?} does not take {fin} inputs"
                    )));
                }
                let fout = wd.b;
                let mut out = Tensor4::zeros(Dims::new(n, fout, 1, 1));
                gemm(false, true, n, fout, fin, x.data(), wt.data(), out.data_mut());
                if inputs.len() == 3 {
                    let b = v(2);
                    if b.len() != fout {
                        return Err(Error::shape(format!("linear bias {:?}", b.dims())));
                    }
                    for row in out.data_mut().chunks_exact_mut(fout) {
                        for (o, &bv) in row.iter_mut().zip(b.data()) {
                            *o += bv;
                        }
                    }
                }
                plain(out)
            }
            OpKind::Reshape(dims) => plain(v(0).clone().reshape(*dims)?),
            OpKind::TransposeLast2 => plain(ops::transpose_last2(v(0))),
            OpKind::SliceChannels { start, len } => plain(v(0).slice_channels(*start, *len)?),
            OpKind::CrossEntropy { labels } => {
                let logits = v(0);
                let d = logits.dims();
                if d.plane() != 1 || labels.len() != d.b {
                    return Err(Error::shape(format!(
                        "cross_entropy wants (b, k, 1, 1) logits and b labels, got {d:?} and {}",
                        labels.len()
                    )));
                }
                if let Some(&bad) = labels.iter().find(|&&y| y >= d.c) {
                    return Err(Error::Range(format!("label {bad} not in [0, {})", d.c)));
                }
                let probs = ops::softmax_axis(logits, 1)?;
                let mut total = 0.0f64;
                for (row, &y) in logits.data().chunks_exact(d.c).zip(labels) {
                    let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + row.iter().map(|v| (v.as_f64() - max).exp()).sum::<f64>().ln();
                    total += lse - row[y].as_f64();
                }
                let loss = if d.b == 0 { 0.0 } else { total / d.b as f64 };
                Ok((Tensor4::scalar(T::from_f64(loss)), Saved::Probs(probs)))
            }
        }
    }

    /// Vector-Jacobian products of node `idx` for the inputs flagged in `need`.
    fn vjp(&self, idx: usize, g: &Tensor4<T>, need: &[bool]) -> Result<Vec<Option<Tensor4<T>>>> {
        let node = &self.nodes[idx];
        let kind = node.kind.as_ref().expect("leaf has no vjp");
        let v = |i: usize| &self.nodes[node.inputs[i].index].value;
        let mut out: Vec<Option<Tensor4<T>>> = vec![None; node.inputs.len()];
        match kind {
            OpKind::Add => {
                out[0] = Some(g.clone());
                out[1] = Some(g.clone());
            }
            OpKind::AddBroadcast => {
                out[0] = Some(g.clone());
                if need[1] {
                    out[1] = Some(reduce_to(g, v(1).dims()));
                }
            }
            OpKind::Mul => {
                let (a, b) = (v(0), v(1));
                let offs = broadcast_offsets(a.dims(), b.dims());
                if need[0] {
                    let bd = b.data();
                    let data = g.data().iter().zip(&offs).map(|(&gv, &o)| gv * bd[o]).collect();
                    out[0] = Some(Tensor4::from_vec(a.dims(), data)?);
                }
                if need[1] {
                    let mut db = Tensor4::zeros(b.dims());
                    let dd = db.data_mut();
                    for ((&gv, &av), &o) in g.data().iter().zip(a.data()).zip(&offs) {
                        dd[o] += gv * av;
                    }
                    out[1] = Some(db);
                }
            }
            OpKind::ScalarMul => {
                let (s, x) = (v(0), v(1));
                if need[0] {
                    let dot: T = g.data().iter().zip(x.data()).map(|(&a, &b)| a * b).sum();
                    out[0] = Some(Tensor4::full(s.dims(), dot));
                }
                let sv = s.data()[0];
                out[1] = Some(g.map(|gv| sv * gv));
            }
            OpKind::Scale(c) => {
                let c = T::from_f64(*c);
                out[0] = Some(g.map(|gv| c * gv));
            }
            OpKind::Matmul { ta, tb } => {
                let (a, b) = (v(0), v(1));
                let mm = ops::matmul_batched;
                if need[0] {
                    out[0] = Some(match (ta, tb) {
                        (false, false) => mm(g, b, false, true)?,
                        (true, false) => mm(b, g, false, true)?,
                        (false, true) => mm(g, b, false, false)?,
                        (true, true) => mm(b, g, true, true)?,
                    });
                }
                if need[1] {
                    out[1] = Some(match (ta, tb) {
                        (false, false) => mm(a, g, true, false)?,
                        (true, false) => mm(a, g, false, false)?,
                        (false, true) => mm(g, a, true, false)?,
                        (true, true) => mm(g, a, true, true)?,
                    });
                }
            }
            OpKind::Conv2d(spec) => {
                let grads = ops::conv2d_backward(v(0), v(1), g, *spec)?;
                out[0] = need[0].then_some(grads.input);
                out[1] = need[1].then_some(grads.weight);
                if out.len() == 3 && need[2] {
                    out[2] = Some(grads.bias.reshape(v(2).dims())?);
                }
            }
            OpKind::Relu => {
                out[0] = Some(node.value.zip_map(g, |y, gv| if y > T::zero() { gv } else { T::zero() })?);
            }
            OpKind::Sigmoid => {
                out[0] = Some(node.value.zip_map(g, |s, gv| gv * s * (T::one() - s))?);
            }
            OpKind::Softmax { axis } => {
                out[0] = Some(ops::softmax_backward(&node.value, g, *axis)?);
            }
            OpKind::MeanList => {
                let n = T::from_f64(node.inputs.len() as f64);
                let share = g.map(|gv| gv / n);
                for (slot, &n) in out.iter_mut().zip(need) {
                    if n {
                        *slot = Some(share.clone());
                    }
                }
            }
            OpKind::MeanAxes(_) | OpKind::GlobalAvgPool => {
                let x = v(0);
                let count = x.len() / g.len().max(1);
                let inv = T::one() / T::from_f64(count as f64);
                let gd = g.data();
                let data = broadcast_offsets(x.dims(), g.dims())
                    .into_iter()
                    .map(|o| gd[o] * inv)
                    .collect();
                out[0] = Some(Tensor4::from_vec(x.dims(), data)?);
            }
            OpKind::SumAll => {
                out[0] = Some(Tensor4::full(v(0).dims(), g.data()[0]));
            }
            OpKind::MaxPool2x2 => {
                let Saved::Argmax(arg) = &node.saved else {
                    unreachable!("maxpool without argmax")
                };
                let mut dx = Tensor4::zeros(v(0).dims());
                let dd = dx.data_mut();
                for (&gv, &src) in g.data().iter().zip(arg) {
                    dd[src] += gv;
                }
                out[0] = Some(dx);
            }
            OpKind::BilinearResize { .. } => {
                let d = v(0).dims();
                out[0] = Some(ops::bilinear_resize_backward(g, d.h, d.w)?);
            }
            OpKind::Linear => {
                let (x, wt) = (v(0), v(1));
                let (n, fin, fout) = (x.dims().b, x.dims().c * x.dims().plane(), wt.dims().b);
                if need[0] {
                    let mut dx = Tensor4::zeros(x.dims());
                    gemm(false, false, n, fin, fout, g.data(), wt.data(), dx.data_mut());
                    out[0] = Some(dx);
                }
                if need[1] {
                    let mut dw = Tensor4::zeros(wt.dims());
                    gemm(true, false, fout, fin, n, g.data(), x.data(), dw.data_mut());
                    out[1] = Some(dw);
                }
                if out.len() == 3 && need[2] {
                    let mut db = Tensor4::zeros(v(2).dims());
                    for row in g.data().chunks_exact(fout) {
                        for (d, &gv) in db.data_mut().iter_mut().zip(row) {
                            *d += gv;
                        }
                    }
                    out[2] = Some(db);
                }
            }
            OpKind::Reshape(_) => {
                out[0] = Some(g.clone().reshape(v(0).dims())?);
            }
            OpKind::TransposeLast2 => {
                out[0] = Some(ops::transpose_last2(g));
            }
            OpKind::SliceChannels { start, len } => {
                let x = v(0);
                let d = x.dims();
                let plane = d.plane();
                let mut dx = Tensor4::zeros(d);
                for i in 0..d.b {
                    let dst = (i * d.c + start) * plane;
                    let src = i * len * plane;
                    dx.data_mut()[dst..dst + len * plane]
                        .copy_from_slice(&g.data()[src..src + len * plane]);
                }
                out[0] = Some(dx);
            }
            OpKind::CrossEntropy { labels } => {
                let Saved::Probs(p) = &node.saved else {
                    unreachable!("cross entropy without probabilities")
                };
                let d = p.dims();
                let scale = g.data()[0] / T::from_f64(d.b.max(1) as f64);
                let mut dx = p.clone();
                for (row, &y) in dx.data_mut().chunks_exact_mut(d.c).zip(labels) {
                    row[y] -= T::one();
                    for r in row.iter_mut() {
                        *r *= scale;
                    }
                }
                out[0] = Some(dx);
            }
        }
        Ok(out)
    }

    /// Reverse sweep from a scalar `loss`; `∂loss/∂loss = 1` and
    /// contributions from every use of a variable are summed.
    pub fn backward(&self, loss: VarId) -> Result<Gradients<T>> {
        self.check_id(loss)?;
        let order: Vec<usize> = (0..=loss.index).rev().collect();
        self.sweep(loss, &order)
    }

    /// Same as [`Tape::backward`] but visits nodes in a caller-supplied
    /// order, which must contain each node `0..=loss` exactly once and
    /// visit every node after all of its consumers.
    pub fn backward_in_order(&self, loss: VarId, order: &[VarId]) -> Result<Gradients<T>> {
        self.check_id(loss)?;
        let n = loss.index + 1;
        let mut seen = vec![false; n];
        for id in order {
            if id.index >= n || std::mem::replace(&mut seen[id.index], true) {
                return Err(Error::shape(format!("order repeats or overruns node {}", id.index)));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::shape("order does not cover every node"));
        }
        let mut pending = vec![0usize; n];
        for node in &self.nodes[..n] {
            for inp in &node.inputs {
                pending[inp.index] += 1;
            }
        }
        for id in order {
            if pending[id.index] != 0 {
                return Err(Error::shape(format!(
                    "node {} visited before all of its consumers",
                    id.index
                )));
            }
            for inp in &self.nodes[id.index].inputs {
                pending[inp.index] -= 1;
            }
        }
        let order: Vec<usize> = order.iter().map(|id| id.index).collect();
        self.sweep(loss, &order)
    }

    fn sweep(&self, loss: VarId, order: &[usize]) -> Result<Gradients<T>> {
        let ld = self.nodes[loss.index].value.dims();
        if ld != Dims::SCALAR {
            return Err(Error::shape(format!("loss must be (1, 1, 1, 1), got {ld:?}")));
        }
        let mut grads: Vec<Option<Tensor4<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.index].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.index] = Some(Tensor4::scalar(T::one()));
        for &idx in order {
            let node = &self.nodes[idx];
            if node.kind.is_none() || !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let need: Vec<bool> = node
                .inputs
                .iter()
                .map(|id| self.nodes[id.index].requires_grad)
                .collect();
            let contribs = self.vjp(idx, &g, &need)?;
            grads[idx] = Some(g);
            for ((inp, c), n) in node.inputs.iter().zip(contribs).zip(&need) {
                if !n {
                    continue;
                }
                let Some(c) = c else { continue };
                match &mut grads[inp.index] {
                    Some(acc) => acc.add_assign(&c)?,
                    slot @ None => *slot = Some(c),
                }
            }
        }
        Ok(Gradients { grads })
    }

    /// Input handles of a recorded node, in application order.
    pub fn inputs(&self, id: VarId) -> &[VarId] {
        &self.nodes[id.index].inputs
    }

    /// Handle of node `index` (as returned when it was recorded).
    pub fn id_at(&self, index: usize) -> VarId {
        VarId {
            index,
            requires_grad: self.nodes[index].requires_grad,
        }
    }
}

/// Convenience wrappers over [`Tape::apply`].
impl<T: Scalar> Tape<T> {
    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.apply(OpKind::Add, &[a, b])
    }

    pub fn add_broadcast(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.apply(OpKind::AddBroadcast, &[a, b])
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.apply(OpKind::Mul, &[a, b])
    }

    pub fn scalar_mul(&mut self, s: VarId, x: VarId) -> Result<VarId> {
        self.apply(OpKind::ScalarMul, &[s, x])
    }

    pub fn scale(&mut self, x: VarId, c: f64) -> Result<VarId> {
        self.apply(OpKind::Scale(c), &[x])
    }

    pub fn matmul(&mut self, a: VarId, b: VarId, ta: bool, tb: bool) -> Result<VarId> {
        self.apply(OpKind::Matmul { ta, tb }, &[a, b])
    }

    pub fn conv2d(&mut self, x: VarId, weight: VarId, bias: Option<VarId>, spec: ConvSpec) -> Result<VarId> {
        match bias {
            Some(b) => self.apply(OpKind::Conv2d(spec), &[x, weight, b]),
            None => self.apply(OpKind::Conv2d(spec), &[x, weight]),
        }
    }

    pub fn relu(&mut self, x: VarId) -> Result<VarId> {
        self.apply(OpKind::Relu, &[x])
    }

    pub fn sigmoid(&mut self, x: VarId) -> Result<VarId> {
        self.apply(OpKind::Sigmoid, &[x])
    }

    pub fn softmax(&mut self, x: VarId, axis: usize) -> Result<VarId> {
        self.apply(OpKind::Softmax { axis }, &[x])
    }

    pub fn mean_list(&mut self, xs: &[VarId]) -> Result<VarId> {
        self.apply(OpKind::MeanList, xs)
    }

    pub fn mean_axes(&mut self, x: VarId, axes: &[usize]) -> Result<VarId> {
        let mut flags = [false; 4];
        for &a in axes {
            if a > 3 {
                return Err(Error::shape(format!("axis {a} out of range")));
            }
            flags[a] = true;
        }
        self.apply(OpKind::MeanAxes(flags), &[x])
    }

    pub fn sum_all(&mut self, x: VarId) -> Result<VarId> {
        self.apply(OpKind::SumAll, &[x])
    }

    pub fn maxpool2x2(&mut self, x: VarId) -> Result<VarId> {
        self.apply(OpKind::MaxPool2x2, &[x])
    }

    pub fn global_avg_pool(&mut self, x: VarId) -> Result<VarId> {
        self.apply(OpKind::GlobalAvgPool, &[x])
    }

    pub fn bilinear_resize(&mut self, x: VarId, h: usize, w: usize) -> Result<VarId> {
        self.apply(OpKind::BilinearResize { h, w }, &[x])
    }

    pub fn linear(&mut self, x: VarId, weight: VarId, bias: Option<VarId>) -> Result<VarId> {
        match bias {
            Some(b) => self.apply(OpKind::Linear, &[x, weight, b]),
            None => self.apply(OpKind::Linear, &[x, weight]),
        }
    }

    pub fn reshape(&mut self, x: VarId, dims: impl Into<Dims>) -> Result<VarId> {
        self.apply(OpKind::Reshape(dims.into()), &[x])
    }

    pub fn transpose_last2(&mut self, x: VarId) -> Result<VarId> {
        self.apply(OpKind::TransposeLast2, &[x])
    }

    pub fn slice_channels(&mut self, x: VarId, start: usize, len: usize) -> Result<VarId> {
        self.apply(OpKind::SliceChannels { start, len }, &[x])
    }

    pub fn cross_entropy(&mut self, logits: VarId, labels: &[usize]) -> Result<VarId> {
        self.apply(
            OpKind::CrossEntropy {
                labels: labels.to_vec(),
            },
            &[logits],
        )
    }

    /// `(b, D, h, w) → (b, heads, D/heads, h·w)`; a pure reshape.
    pub fn split_heads(&mut self, x: VarId, heads: usize) -> Result<VarId> {
        let d = self.value(x).dims();
        if heads == 0 || d.c % heads != 0 {
            return Err(Error::shape(format!("{} channels do not split into {heads} heads", d.c)));
        }
        self.reshape(x, Dims::new(d.b, heads, d.c / heads, d.plane()))
    }

    /// Inverse of [`Tape::split_heads`] for a spatial size `h × w`.
    pub fn merge_heads(&mut self, x: VarId, h: usize, w: usize) -> Result<VarId> {
        let d = self.value(x).dims();
        if d.w != h * w {
            return Err(Error::shape(format!("{d:?} does not merge into {h}x{w}")));
        }
        self.reshape(x, Dims::new(d.b, d.c * d.h, h, w))
    }
}
