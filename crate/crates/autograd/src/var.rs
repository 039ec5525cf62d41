use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::rc::Rc;
use std::sync::Arc;

use crate::kernels::{self, Padding};
use crate::tensor::{Shape, Tensor};

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Node in a differentiation graph. Nodes that do not require gradients keep
/// no parents, so inference builds no graph at all.
pub struct Node {
    id: u64,
    value: Arc<Tensor>,
    op: Op,
    requires_grad: bool,
}

#[derive(Clone)]
pub struct Var(Rc<Node>);

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f32),
    AddScalar(Var),
    MulConst(Var, Arc<Tensor>),
    Sigmoid(Var),
    Tanh(Var),
    Recip(Var),
    Sqrt(Var),
    Pad(Var, Padding),
    PadAdjoint(Var, Padding),
    Conv(Var, Var, usize),
    ConvInputGrad(Var, Var, usize),
    ConvWeightGrad(Var, Var, usize),
    Upsample(Var, bool),
    UpsampleAdjoint(Var, bool),
    CatChannels(Vec<Var>),
    SliceChannels(Var, usize),
    EmbedChannels(Var, usize),
    CatBatch(Vec<Var>),
    SliceBatch(Var, usize),
    EmbedBatch(Var, usize),
    SumAll(Var),
    BroadcastScalar(Var),
    BroadcastChannel(Var),
    SumToChannel(Var),
    SpatialMean(Var),
    SpatialMeanAdjoint(Var),
    SumPerSample(Var),
    BroadcastPerSample(Var),
}

impl Op {
    fn parents(&self) -> Vec<&Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) => vec![a, b],
            Conv(a, b, _) | ConvInputGrad(a, b, _) | ConvWeightGrad(a, b, _) => vec![a, b],
            CatChannels(v) | CatBatch(v) => v.iter().collect(),
            Scale(a, _)
            | AddScalar(a)
            | MulConst(a, _)
            | Sigmoid(a)
            | Tanh(a)
            | Recip(a)
            | Sqrt(a)
            | Pad(a, _)
            | PadAdjoint(a, _)
            | Upsample(a, _)
            | UpsampleAdjoint(a, _)
            | SliceChannels(a, _)
            | EmbedChannels(a, _)
            | SliceBatch(a, _)
            | EmbedBatch(a, _)
            | SumAll(a)
            | BroadcastScalar(a)
            | BroadcastChannel(a)
            | SumToChannel(a)
            | SpatialMean(a)
            | SpatialMeanAdjoint(a)
            | SumPerSample(a)
            | BroadcastPerSample(a) => vec![a],
        }
    }
}

impl std::fmt::Debug for Var {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}({:?})", self.0.id, self.0.value)
    }
}

impl Var {
    fn from_op(value: Tensor, op: Op) -> Var {
        let requires_grad = op.parents().iter().any(|p| p.requires_grad());
        let op = if requires_grad { op } else { Op::Leaf };
        Var(Rc::new(Node {
            id: next_id(),
            value: Arc::new(value),
            op,
            requires_grad,
        }))
    }

    /// A leaf that gradients are taken with respect to.
    pub fn param(value: Tensor) -> Var {
        Self::param_shared(Arc::new(value))
    }

    pub fn param_shared(value: Arc<Tensor>) -> Var {
        Var(Rc::new(Node {
            id: next_id(),
            value,
            op: Op::Leaf,
            requires_grad: true,
        }))
    }

    pub fn constant(value: Tensor) -> Var {
        Self::constant_shared(Arc::new(value))
    }

    pub fn constant_shared(value: Arc<Tensor>) -> Var {
        Var(Rc::new(Node {
            id: next_id(),
            value,
            op: Op::Leaf,
            requires_grad: false,
        }))
    }

    pub fn scalar(v: f32) -> Var {
        Self::constant(Tensor::scalar(v))
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn value(&self) -> &Tensor {
        &self.0.value
    }

    pub fn shared_value(&self) -> Arc<Tensor> {
        Arc::clone(&self.0.value)
    }

    pub fn shape(&self) -> Shape {
        self.0.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Var {
        if self.requires_grad() {
            Self::constant_shared(self.shared_value())
        } else {
            self.clone()
        }
    }

    pub fn item(&self) -> f32 {
        self.value().item()
    }

    pub fn add(&self, o: &Var) -> Var {
        let v = self.value().zip_map(o.value(), |a, b| a + b);
        Self::from_op(v, Op::Add(self.clone(), o.clone()))
    }

    pub fn sub(&self, o: &Var) -> Var {
        let v = self.value().zip_map(o.value(), |a, b| a - b);
        Self::from_op(v, Op::Sub(self.clone(), o.clone()))
    }

    pub fn mul(&self, o: &Var) -> Var {
        let v = self.value().zip_map(o.value(), |a, b| a * b);
        Self::from_op(v, Op::Mul(self.clone(), o.clone()))
    }

    pub fn scale(&self, c: f32) -> Var {
        Self::from_op(self.value().map(|a| a * c), Op::Scale(self.clone(), c))
    }

    pub fn neg(&self) -> Var {
        self.scale(-1.0)
    }

    pub fn add_scalar(&self, c: f32) -> Var {
        Self::from_op(self.value().map(|a| a + c), Op::AddScalar(self.clone()))
    }

    /// Elementwise product with a constant tensor.
    pub fn mul_const(&self, m: Arc<Tensor>) -> Var {
        let v = self.value().zip_map(&m, |a, b| a * b);
        Self::from_op(v, Op::MulConst(self.clone(), m))
    }

    /// Leaky rectifier; `slope = 0` gives the plain rectifier.
    pub fn leaky_relu(&self, slope: f32) -> Var {
        let mask = self.value().map(|a| if a > 0.0 { 1.0 } else { slope });
        self.mul_const(Arc::new(mask))
    }

    pub fn relu(&self) -> Var {
        self.leaky_relu(0.0)
    }

    /// Logistic function, kept strictly inside (0, 1) where f32 would round
    /// to an endpoint.
    pub fn sigmoid(&self) -> Var {
        const HI: f32 = 1.0 - f32::EPSILON / 2.0;
        let v = self.value().map(|a| {
            let s = if a >= 0.0 {
                1.0 / (1.0 + (-a).exp())
            } else {
                let e = a.exp();
                e / (1.0 + e)
            };
            s.clamp(f32::MIN_POSITIVE, HI)
        });
        Self::from_op(v, Op::Sigmoid(self.clone()))
    }

    pub fn tanh(&self) -> Var {
        Self::from_op(self.value().map(f32::tanh), Op::Tanh(self.clone()))
    }

    pub fn recip(&self) -> Var {
        Self::from_op(self.value().map(|a| 1.0 / a), Op::Recip(self.clone()))
    }

    pub fn sqrt(&self) -> Var {
        Self::from_op(self.value().map(f32::sqrt), Op::Sqrt(self.clone()))
    }

    pub fn square(&self) -> Var {
        self.mul(self)
    }

    pub fn pad(&self, p: Padding) -> Var {
        if p.top + p.bottom + p.left + p.right == 0 {
            return self.clone();
        }
        Self::from_op(kernels::pad(self.value(), &p), Op::Pad(self.clone(), p))
    }

    fn pad_adjoint(&self, p: Padding, orig: Shape) -> Var {
        Self::from_op(
            kernels::pad_adjoint(self.value(), &p, orig),
            Op::PadAdjoint(self.clone(), p),
        )
    }

    /// Valid strided convolution with kernel `w` of shape `[out, in, kh, kw]`.
    pub fn conv2d(&self, w: &Var, stride: usize) -> Var {
        let v = kernels::conv2d(self.value(), w.value(), stride);
        Self::from_op(v, Op::Conv(self.clone(), w.clone(), stride))
    }

    fn conv2d_input_grad(&self, w: &Var, stride: usize, input: Shape) -> Var {
        let v = kernels::conv2d_input_grad(self.value(), w.value(), stride, input);
        Self::from_op(v, Op::ConvInputGrad(self.clone(), w.clone(), stride))
    }

    fn conv2d_weight_grad(&self, gy: &Var, stride: usize, kernel: Shape) -> Var {
        let v = kernels::conv2d_weight_grad(self.value(), gy.value(), stride, kernel);
        Self::from_op(v, Op::ConvWeightGrad(self.clone(), gy.clone(), stride))
    }

    /// Bilinear ×2 upsampling.
    pub fn upsample2(&self, wrap: bool) -> Var {
        Self::from_op(
            kernels::upsample2(self.value(), wrap),
            Op::Upsample(self.clone(), wrap),
        )
    }

    fn upsample2_adjoint(&self, wrap: bool) -> Var {
        Self::from_op(
            kernels::upsample2_adjoint(self.value(), wrap),
            Op::UpsampleAdjoint(self.clone(), wrap),
        )
    }

    pub fn cat_channels(parts: &[Var]) -> Var {
        if parts.len() == 1 {
            return parts[0].clone();
        }
        let refs: Vec<&Tensor> = parts.iter().map(|p| p.value()).collect();
        Self::from_op(kernels::cat_channels(&refs), Op::CatChannels(parts.to_vec()))
    }

    pub fn slice_channels(&self, start: usize, len: usize) -> Var {
        Self::from_op(
            kernels::slice_channels(self.value(), start, len),
            Op::SliceChannels(self.clone(), start),
        )
    }

    fn embed_channels(&self, start: usize, total: usize) -> Var {
        Self::from_op(
            kernels::embed_channels(self.value(), start, total),
            Op::EmbedChannels(self.clone(), start),
        )
    }

    pub fn cat_batch(parts: &[Var]) -> Var {
        if parts.len() == 1 {
            return parts[0].clone();
        }
        let refs: Vec<&Tensor> = parts.iter().map(|p| p.value()).collect();
        Self::from_op(Tensor::cat_batch(&refs), Op::CatBatch(parts.to_vec()))
    }

    pub fn slice_batch(&self, start: usize, len: usize) -> Var {
        if start == 0 && len == self.shape().n {
            return self.clone();
        }
        Self::from_op(
            self.value().slice_batch(start, len),
            Op::SliceBatch(self.clone(), start),
        )
    }

    fn embed_batch(&self, start: usize, total: usize) -> Var {
        Self::from_op(
            kernels::embed_batch(self.value(), start, total),
            Op::EmbedBatch(self.clone(), start),
        )
    }

    pub fn sum_all(&self) -> Var {
        let v = Tensor::scalar(self.value().sum() as f32);
        Self::from_op(v, Op::SumAll(self.clone()))
    }

    pub fn mean_all(&self) -> Var {
        self.sum_all().scale(1.0 / self.value().len() as f32)
    }

    /// Broadcasts a single-element tensor to `shape`.
    pub fn broadcast_scalar(&self, shape: Shape) -> Var {
        let v = Tensor::full(shape, self.item());
        Self::from_op(v, Op::BroadcastScalar(self.clone()))
    }

    /// Broadcasts a `[1, C, 1, 1]` tensor (e.g. a bias) to `shape`.
    pub fn broadcast_channel(&self, shape: Shape) -> Var {
        Self::from_op(
            kernels::broadcast_channel(self.value(), shape),
            Op::BroadcastChannel(self.clone()),
        )
    }

    fn sum_to_channel(&self) -> Var {
        Self::from_op(
            kernels::sum_to_channel(self.value()),
            Op::SumToChannel(self.clone()),
        )
    }

    /// Global average pooling to `[N, C, 1, 1]`.
    pub fn spatial_mean(&self) -> Var {
        Self::from_op(
            kernels::spatial_mean(self.value()),
            Op::SpatialMean(self.clone()),
        )
    }

    fn spatial_mean_adjoint(&self, h: usize, w: usize) -> Var {
        Self::from_op(
            kernels::spatial_mean_adjoint(self.value(), h, w),
            Op::SpatialMeanAdjoint(self.clone()),
        )
    }

    /// Per-sample sums of a time-major batch; see [`kernels::sum_per_sample`].
    pub fn sum_per_sample(&self, samples: usize) -> Var {
        Self::from_op(
            kernels::sum_per_sample(self.value(), samples),
            Op::SumPerSample(self.clone()),
        )
    }

    pub fn broadcast_per_sample(&self, shape: Shape) -> Var {
        Self::from_op(
            kernels::broadcast_per_sample(self.value(), shape),
            Op::BroadcastPerSample(self.clone()),
        )
    }

    /// Parent gradients of this node given the gradient `g` of its output.
    fn backward(&self, g: &Var, keep: bool) -> Vec<(Var, Var)> {
        use Op::*;
        let d = |v: &Var| if keep { v.clone() } else { v.detach() };
        let me = d(self);
        let shape_of = |v: &Var| v.shape();
        match &self.0.op {
            Leaf => vec![],
            Add(a, b) => vec![(a.clone(), g.clone()), (b.clone(), g.clone())],
            Sub(a, b) => vec![(a.clone(), g.clone()), (b.clone(), g.neg())],
            Mul(a, b) => vec![(a.clone(), g.mul(&d(b))), (b.clone(), g.mul(&d(a)))],
            Scale(a, c) => vec![(a.clone(), g.scale(*c))],
            AddScalar(a) => vec![(a.clone(), g.clone())],
            MulConst(a, m) => vec![(a.clone(), g.mul_const(Arc::clone(m)))],
            Sigmoid(a) => {
                let ds = me.sub(&me.square());
                vec![(a.clone(), g.mul(&ds))]
            }
            Tanh(a) => vec![(a.clone(), g.sub(&g.mul(&me.square())))],
            Recip(a) => vec![(a.clone(), g.mul(&me.square()).neg())],
            Sqrt(a) => vec![(a.clone(), g.mul(&me.recip()).scale(0.5))],
            Pad(a, p) => vec![(a.clone(), g.pad_adjoint(*p, shape_of(a)))],
            PadAdjoint(a, p) => vec![(a.clone(), g.pad(*p))],
            Conv(x, w, s) => vec![
                (x.clone(), g.conv2d_input_grad(&d(w), *s, shape_of(x))),
                (w.clone(), d(x).conv2d_weight_grad(g, *s, shape_of(w))),
            ],
            // z = convᵀ(gy, w) with z shaped like the conv input.
            ConvInputGrad(gy, w, s) => vec![
                (gy.clone(), g.conv2d(&d(w), *s)),
                (w.clone(), g.conv2d_weight_grad(&d(gy), *s, shape_of(w))),
            ],
            // z = ∂conv/∂w(x, gy) shaped like the kernel.
            ConvWeightGrad(x, gy, s) => vec![
                (x.clone(), d(gy).conv2d_input_grad(g, *s, shape_of(x))),
                (gy.clone(), d(x).conv2d(g, *s)),
            ],
            Upsample(a, wrap) => vec![(a.clone(), g.upsample2_adjoint(*wrap))],
            UpsampleAdjoint(a, wrap) => vec![(a.clone(), g.upsample2(*wrap))],
            CatChannels(parts) => {
                let mut off = 0;
                parts
                    .iter()
                    .map(|p| {
                        let c = p.shape().c;
                        let r = (p.clone(), g.slice_channels(off, c));
                        off += c;
                        r
                    })
                    .collect()
            }
            SliceChannels(a, start) => vec![(a.clone(), g.embed_channels(*start, a.shape().c))],
            EmbedChannels(a, start) => vec![(a.clone(), g.slice_channels(*start, a.shape().c))],
            CatBatch(parts) => {
                let mut off = 0;
                parts
                    .iter()
                    .map(|p| {
                        let n = p.shape().n;
                        let r = (p.clone(), g.slice_batch(off, n));
                        off += n;
                        r
                    })
                    .collect()
            }
            SliceBatch(a, start) => vec![(a.clone(), g.embed_batch(*start, a.shape().n))],
            EmbedBatch(a, start) => vec![(a.clone(), g.slice_batch(*start, a.shape().n))],
            SumAll(a) => vec![(a.clone(), g.broadcast_scalar(a.shape()))],
            BroadcastScalar(a) => vec![(a.clone(), g.sum_all())],
            BroadcastChannel(a) => vec![(a.clone(), g.sum_to_channel())],
            SumToChannel(a) => vec![(a.clone(), g.broadcast_channel(a.shape()))],
            SpatialMean(a) => {
                let s = a.shape();
                vec![(a.clone(), g.spatial_mean_adjoint(s.h, s.w))]
            }
            SpatialMeanAdjoint(a) => vec![(a.clone(), g.spatial_mean())],
            SumPerSample(a) => vec![(a.clone(), g.broadcast_per_sample(a.shape()))],
            BroadcastPerSample(a) => vec![(a.clone(), g.sum_per_sample(a.shape().n))],
        }
    }
}

/// Reverse-mode gradients of `output` (summed over its elements) with respect
/// to each of `wrt`. Inputs unreachable from `output` get zero gradients.
///
/// With `create_graph`, the returned gradients are themselves differentiable,
/// which is what a gradient-norm penalty needs.
pub fn grad(output: &Var, wrt: &[&Var], create_graph: bool) -> Vec<Var> {
    let order = topo_order(output);
    let mut grads: HashMap<u64, Var> = HashMap::new();
    if output.requires_grad() {
        grads.insert(output.id(), Var::constant(Tensor::ones(output.shape())));
    }
    let wanted: HashSet<u64> = wrt.iter().map(|v| v.id()).collect();
    let mut results: HashMap<u64, Var> = HashMap::new();
    for node in order.iter().rev() {
        let Some(g) = grads.remove(&node.id()) else {
            continue;
        };
        let g = if create_graph { g } else { g.detach() };
        if wanted.contains(&node.id()) {
            results.insert(node.id(), g.clone());
        }
        for (parent, pg) in node.backward(&g, create_graph) {
            if !parent.requires_grad() {
                continue;
            }
            let acc = match grads.remove(&parent.id()) {
                Some(prev) => prev.add(&pg),
                None => pg,
            };
            grads.insert(parent.id(), acc);
        }
    }
    wrt.iter()
        .map(|v| {
            results
                .remove(&v.id())
                .unwrap_or_else(|| Var::constant(Tensor::zeros(v.shape())))
        })
        .collect()
}

/// Nodes requiring gradients reachable from `root`, parents before children.
fn topo_order(root: &Var) -> Vec<Var> {
    let mut order = Vec::new();
    if !root.requires_grad() {
        return order;
    }
    let mut seen = HashSet::new();
    let mut stack: Vec<(Var, bool)> = vec![(root.clone(), false)];
    while let Some((v, expanded)) = stack.pop() {
        if expanded {
            order.push(v);
            continue;
        }
        if !seen.insert(v.id()) {
            continue;
        }
        stack.push((v.clone(), true));
        for p in v.0.op.parents() {
            if p.requires_grad() && !seen.contains(&p.id()) {
                stack.push((p.clone(), false));
            }
        }
    }
    order
}

impl Drop for Node {
    // Long recurrent chains would otherwise drop recursively.
    fn drop(&mut self) {
        let mut pending: Vec<Var> = Vec::new();
        take_parents(&mut self.op, &mut pending);
        while let Some(v) = pending.pop() {
            if let Ok(mut node) = Rc::try_unwrap(v.0) {
                take_parents(&mut node.op, &mut pending);
            }
        }
    }
}

fn take_parents(op: &mut Op, out: &mut Vec<Var>) {
    let op = std::mem::replace(op, Op::Leaf);
    use Op::*;
    match op {
        Leaf => {}
        Add(a, b) | Sub(a, b) | Mul(a, b) => out.extend([a, b]),
        Conv(a, b, _) | ConvInputGrad(a, b, _) | ConvWeightGrad(a, b, _) => out.extend([a, b]),
        CatChannels(v) | CatBatch(v) => out.extend(v),
        Scale(a, _)
        | AddScalar(a)
        | MulConst(a, _)
        | Sigmoid(a)
        | Tanh(a)
        | Recip(a)
        | Sqrt(a)
        | Pad(a, _)
        | PadAdjoint(a, _)
        | Upsample(a, _)
        | UpsampleAdjoint(a, _)
        | SliceChannels(a, _)
        | EmbedChannels(a, _)
        | SliceBatch(a, _)
        | EmbedBatch(a, _)
        | SumAll(a)
        | BroadcastScalar(a)
        | BroadcastChannel(a)
        | SumToChannel(a)
        | SpatialMean(a)
        | SpatialMeanAdjoint(a)
        | SumPerSample(a)
        | BroadcastPerSample(a) => out.push(a),
    }
}
