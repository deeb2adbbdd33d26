//! Reverse-mode automatic differentiation over a fixed vocabulary of tensor
//! ops.
//!
//! A [`Graph`] is an append-only list of nodes. Every op validates its
//! inputs, computes its value eagerly and records enough to run its backward
//! rule, so node order is already a topological order and [`Graph::backward`]
//! is a single reverse sweep.
//!
//! ```
//! use stmfa::autodiff::Graph;
//! use stmfa::Tensor;
//!
//! let mut g = Graph::new();
//! let a = g.variable(Tensor::new(&[2], vec![2.0, -1.0]).unwrap());
//! let b = g.constant(Tensor::new(&[2], vec![3.0, 4.0]).unwrap());
//! let prod = g.mul(a, b).unwrap();
//! let loss = g.sum(prod).unwrap();
//! g.backward(loss).unwrap();
//! assert_eq!(g.grad(a).unwrap().data(), &[3.0, 4.0]);
//! ```

mod checkpoint;
pub mod gradcheck;
mod kernels;
mod lstm;
mod param;

use std::collections::HashMap;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use lstm::ConvLstmCell;
pub use param::{Adam, AdamConfig, ParamId, ParamStore, Parameter};

use crate::error::{Error, Result};
use crate::tensor::{axis_split, Tensor};
use crate::wavelet::{self, Family, Mode, SubBands};
use kernels::ConvGeom;

/// Slope of [`Graph::leaky_relu`] used by the model unless configured.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Unary {
    Neg,
    /// Subgradient 0 at 0.
    Abs,
    Square,
    Sigmoid,
    Tanh,
    LeakyRelu(f64),
    /// Natural log; non-positive inputs are a domain error.
    Log,
    /// Clamp into `[lo, hi]`; gradient passes only inside the interval.
    Clamp(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    Unary(Unary, NodeId),
    Binary(Binary, NodeId, NodeId),
    Scale(NodeId, f64),
    Powi(NodeId, i32),
    Sum(NodeId),
    Conv2d {
        input: NodeId,
        kernel: NodeId,
        bias: Option<NodeId>,
        geom: ConvGeom,
    },
    ConvTranspose2d {
        input: NodeId,
        kernel: NodeId,
        bias: Option<NodeId>,
        geom: ConvGeom,
    },
    AvgPool2(NodeId),
    Upsample2(NodeId),
    GlobalAvgPool(NodeId),
    Concat {
        parts: Vec<NodeId>,
        axis: usize,
    },
    Slice {
        input: NodeId,
        axis: usize,
        start: usize,
    },
    Reshape(NodeId),
    FramesToChannels(NodeId),
    DwtSpatial(NodeId, Family),
    DwtTemporal {
        input: NodeId,
        family: Family,
        /// Level-by-level frame counts of the low band being split, finest first.
        level_lengths: Vec<usize>,
    },
}

impl Op {
    fn parents(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf | Op::Param(_) => vec![],
            Op::Unary(_, a)
            | Op::Scale(a, _)
            | Op::Powi(a, _)
            | Op::Sum(a)
            | Op::AvgPool2(a)
            | Op::Upsample2(a)
            | Op::GlobalAvgPool(a)
            | Op::Reshape(a)
            | Op::FramesToChannels(a)
            | Op::DwtSpatial(a, _) => vec![*a],
            Op::Slice { input, .. } | Op::DwtTemporal { input, .. } => vec![*input],
            Op::Binary(_, a, b) => vec![*a, *b],
            Op::Conv2d {
                input, kernel, bias, ..
            }
            | Op::ConvTranspose2d {
                input, kernel, bias, ..
            } => {
                let mut p = vec![*input, *kernel];
                p.extend(bias);
                p
            }
            Op::Concat { parts, .. } => parts.clone(),
        }
    }
}

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// A recorded computation. See the module docs.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, NodeId>,
    flops: u64,
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

    /// Forward floating-point operations recorded so far: two per
    /// multiply-add in convolutions plus one per output sample of every op.
    pub fn flops(&self) -> u64 {
        self.flops
    }

    /// A leaf that does not receive gradients.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push_raw(value, Op::Leaf, false)
    }

    /// A leaf that receives gradients.
    pub fn variable(&mut self, value: Tensor) -> NodeId {
        self.push_raw(value, Op::Leaf, true)
    }

    /// The leaf for a stored parameter. Repeated calls return the same node,
    /// so gradients from every use are summed there.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        if let Some(&n) = self.param_nodes.get(&id) {
            return n;
        }
        let n = self.push_raw(store.get(id).value.clone(), Op::Param(id), true);
        self.param_nodes.insert(id, n);
        n
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    /// Accumulated gradient, if any backward pass reached this node.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].grad.as_ref()
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push_raw(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = op.parents().iter().any(|p| self.nodes[p.0].requires_grad);
        self.flops += value.len() as u64;
        if let Op::Conv2d { geom, .. } | Op::ConvTranspose2d { geom, .. } = &op {
            self.flops += 2 * (geom.ho * geom.wo * geom.kh * geom.kw * geom.cin * geom.cout) as u64;
        }
        Ok(self.push_raw(value, op, requires_grad))
    }

    // ---- elementwise -------------------------------------------------------

    pub fn unary(&mut self, kind: Unary, a: NodeId) -> Result<NodeId> {
        let x = self.value(a);
        let value = match kind {
            Unary::Neg => x.map(|v| -v),
            Unary::Abs => x.map(f64::abs),
            Unary::Square => x.map(|v| v * v),
            Unary::Sigmoid => x.map(sigmoid),
            Unary::Tanh => x.map(f64::tanh),
            Unary::LeakyRelu(slope) => x.map(|v| if v > 0.0 { v } else { slope * v }),
            Unary::Log => {
                if let Some(bad) = x.data().iter().find(|&&v| v <= 0.0) {
                    return Err(Error::Domain {
                        op: "log",
                        msg: format!("log of non-positive value {bad}"),
                    });
                }
                x.map(f64::ln)
            }
            Unary::Clamp(lo, hi) => {
                if lo > hi {
                    return Err(Error::contract("clamp", format!("empty interval [{lo}, {hi}]")));
                }
                x.map(|v| v.clamp(lo, hi))
            }
        };
        self.push("unary", value, Op::Unary(kind, a))
    }

    /// Elementwise binary op. Shapes must match, or one side must hold a
    /// single sample which is broadcast.
    pub fn binary(&mut self, kind: Binary, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (x, y) = (self.value(a), self.value(b));
        let f = match kind {
            Binary::Add => |p: f64, q: f64| p + q,
            Binary::Sub => |p: f64, q: f64| p - q,
            Binary::Mul => |p: f64, q: f64| p * q,
        };
        let value = if x.shape() == y.shape() {
            x.zip_map(y, f)?
        } else if y.is_scalar() {
            let q = y.item();
            x.map(|p| f(p, q))
        } else if x.is_scalar() {
            let p = x.item();
            y.map(|q| f(p, q))
        } else {
            return Err(Error::contract(
                "elementwise",
                format!("shape mismatch {:?} vs {:?}", x.shape(), y.shape()),
            ));
        };
        self.push("binary", value, Op::Binary(kind, a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn neg(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(Unary::Neg, a)
    }

    pub fn abs(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(Unary::Abs, a)
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(Unary::Square, a)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(Unary::Tanh, a)
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> Result<NodeId> {
        self.unary(Unary::LeakyRelu(slope), a)
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(Unary::Log, a)
    }

    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        self.unary(Unary::Clamp(lo, hi), a)
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        let value = self.value(a).map(|v| v * factor);
        self.push("scale", value, Op::Scale(a, factor))
    }

    /// Integer power `x^n`, `n ≥ 1`.
    pub fn powi(&mut self, a: NodeId, n: i32) -> Result<NodeId> {
        if n < 1 {
            return Err(Error::contract("powi", format!("exponent must be >= 1, got {n}")));
        }
        let value = self.value(a).map(|v| v.powi(n));
        self.push("powi", value, Op::Powi(a, n))
    }

    /// Sum of all samples, as a one-element tensor.
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let value = Tensor::scalar(self.value(a).sum());
        self.push("sum", value, Op::Sum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.value(a).len() as f64;
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n)
    }

    // ---- spatial -----------------------------------------------------------

    /// Zero-padded cross-correlation of an `(H, W, Cin)` input with a
    /// `(kh, kw, Cin, Cout)` kernel, plus an optional `(Cout)` bias.
    pub fn conv2d(
        &mut self,
        input: NodeId,
        kernel: NodeId,
        bias: Option<NodeId>,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        let geom = ConvGeom::new("conv2d", self.shape(input), self.shape(kernel), stride, padding)?;
        self.check_bias("conv2d", bias, geom.cout)?;
        let value = kernels::conv2d(
            self.value(input),
            self.value(kernel),
            bias.map(|b| self.value(b)),
            &geom,
        );
        self.push(
            "conv2d",
            value,
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
            },
        )
    }

    /// Adjoint of [`Graph::conv2d`] with the same kernel, stride and padding:
    /// maps `(Ho, Wo, Cout)` back to `(out_h, out_w, Cin)`. The optional bias
    /// has `Cin` entries.
    pub fn conv2d_transpose(
        &mut self,
        input: NodeId,
        kernel: NodeId,
        bias: Option<NodeId>,
        stride: usize,
        padding: usize,
        out_extents: (usize, usize),
    ) -> Result<NodeId> {
        let ks = self.shape(kernel).to_vec();
        if ks.len() != 4 {
            return Err(Error::contract(
                "conv2d_transpose",
                format!("kernel must be (kh, kw, Cin, Cout), got {ks:?}"),
            ));
        }
        let in_shape = self.shape(input).to_vec();
        let geom = ConvGeom::new(
            "conv2d_transpose",
            &[out_extents.0, out_extents.1, ks[2]],
            &ks,
            stride,
            padding,
        )?;
        if in_shape != [geom.ho, geom.wo, geom.cout] {
            return Err(Error::contract(
                "conv2d_transpose",
                format!(
                    "input {in_shape:?} is not the conv2d output shape [{}, {}, {}] for target extents {out_extents:?}",
                    geom.ho, geom.wo, geom.cout
                ),
            ));
        }
        self.check_bias("conv2d_transpose", bias, geom.cin)?;
        let mut value = kernels::conv2d_input_grad(self.value(input), self.value(kernel), &geom);
        if let Some(b) = bias {
            let b = self.value(b).data().to_vec();
            kernels::add_channel_bias(value.data_mut(), &b);
        }
        self.push(
            "conv2d_transpose",
            value,
            Op::ConvTranspose2d {
                input,
                kernel,
                bias,
                geom,
            },
        )
    }

    fn check_bias(&self, op: &'static str, bias: Option<NodeId>, channels: usize) -> Result<()> {
        if let Some(b) = bias {
            if self.shape(b) != [channels] {
                return Err(Error::contract(
                    op,
                    format!("bias must have shape [{channels}], got {:?}", self.shape(b)),
                ));
            }
        }
        Ok(())
    }

    fn check_image(&self, op: &'static str, x: NodeId, even: bool) -> Result<()> {
        let s = self.shape(x);
        if s.len() != 3 {
            return Err(Error::contract(op, format!("expected (H, W, C), got {s:?}")));
        }
        if even && (!s[0].is_multiple_of(2) || !s[1].is_multiple_of(2) || s[0] == 0 || s[1] == 0) {
            return Err(Error::contract(
                op,
                format!("extents must be even, got {}x{}", s[0], s[1]),
            ));
        }
        Ok(())
    }

    /// 2x2 mean pooling. Extents must be even.
    pub fn avg_pool2(&mut self, x: NodeId) -> Result<NodeId> {
        self.check_image("avg_pool2", x, true)?;
        let value = kernels::avg_pool2(self.value(x));
        self.push("avg_pool2", value, Op::AvgPool2(x))
    }

    /// Nearest-neighbour upsampling by 2 along both spatial axes.
    pub fn upsample_nearest2(&mut self, x: NodeId) -> Result<NodeId> {
        self.check_image("upsample_nearest2", x, false)?;
        let value = kernels::upsample_nearest2(self.value(x));
        self.push("upsample_nearest2", value, Op::Upsample2(x))
    }

    /// Mean over the spatial axes: `(H, W, C)` to `(1, 1, C)`.
    pub fn global_avg_pool(&mut self, x: NodeId) -> Result<NodeId> {
        self.check_image("global_avg_pool", x, false)?;
        let c = self.shape(x)[2];
        let n = (self.shape(x)[0] * self.shape(x)[1]) as f64;
        let mut s = kernels::channel_sums(self.value(x), c);
        s.data_mut().iter_mut().for_each(|v| *v /= n);
        let value = Tensor::from_parts(vec![1, 1, c], s.into_data());
        self.push("global_avg_pool", value, Op::GlobalAvgPool(x))
    }

    // ---- structural --------------------------------------------------------

    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return Err(Error::contract("concat", "no inputs"));
        };
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(Error::contract(
                "concat",
                format!("axis {axis} out of range for rank {}", base.len()),
            ));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::contract(
                    "concat",
                    format!("cannot concatenate {s:?} with {base:?} along axis {axis}"),
                ));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = axis_split(&base, axis);
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &p in parts {
                let t = self.value(p);
                let block = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
            }
        }
        let value = Tensor::from_parts(shape, data);
        self.push(
            "concat",
            value,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
        )
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(&mut self, x: NodeId, axis: usize, start: usize, len: usize) -> Result<NodeId> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || len == 0 || start + len > s[axis] {
            return Err(Error::contract(
                "slice",
                format!("range {start}..{} invalid for axis {axis} of {s:?}", start + len),
            ));
        }
        let (outer, n, inner) = axis_split(&s, axis);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            data.extend_from_slice(&src[(o * n + start) * inner..(o * n + start + len) * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        let value = Tensor::from_parts(shape, data);
        self.push("slice", value, Op::Slice { input: x, axis, start })
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let value = self.value(x).reshape(shape)?;
        self.push("reshape", value, Op::Reshape(x))
    }

    /// `(T, H, W, C)` to `(H, W, T·C)`, frame `t` occupying channels
    /// `t·C..(t+1)·C`.
    pub fn frames_to_channels(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 {
            return Err(Error::contract(
                "frames_to_channels",
                format!("expected (T, H, W, C), got {s:?}"),
            ));
        }
        let value = frames_to_channels(self.value(x));
        self.push("frames_to_channels", value, Op::FramesToChannels(x))
    }

    // ---- wavelet layers ----------------------------------------------------

    /// Single-level spatial DWT of an `(H, W, C)` input as a linear layer.
    /// Output is `(H/2, W/2, 4C)` with channel blocks LL, LH, HL, HH.
    pub fn dwt_spatial(&mut self, x: NodeId, family: Family) -> Result<NodeId> {
        let bands = wavelet::dwt2d_spatial(self.value(x), &family.filter())?;
        let c = self.shape(x)[2];
        let value = concat_channels(&[&bands.ll, &bands.lh, &bands.hl, &bands.hh], c);
        self.push("dwt_spatial", value, Op::DwtSpatial(x, family))
    }

    /// Multi-level temporal DWT of a `(T, H, W, C)` clip as a linear layer.
    /// The output stacks the retained bands along time as in
    /// [`wavelet::TemporalBands::stacked`].
    pub fn dwt_temporal(&mut self, x: NodeId, family: Family) -> Result<NodeId> {
        let bands = wavelet::multilevel_temporal(self.value(x), &family.filter())?;
        let level_lengths = bands
            .levels
            .iter()
            .map(|l| 2 * l.high.shape()[0])
            .collect();
        let value = bands.stacked();
        self.push(
            "dwt_temporal",
            value,
            Op::DwtTemporal {
                input: x,
                family,
                level_lengths,
            },
        )
    }

    // ---- backward ----------------------------------------------------------

    /// Back-propagates from a one-element `root`, adding into the stored
    /// gradient of every node that requires one.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        let pass = self.backward_pass(root)?;
        self.accumulate_pass(pass, None);
        Ok(())
    }

    /// As [`Graph::backward`], and also adds this pass's gradients for
    /// parameters of `store` into the store.
    pub fn backward_into(&mut self, root: NodeId, store: &mut ParamStore) -> Result<()> {
        let pass = self.backward_pass(root)?;
        self.accumulate_pass(pass, Some(store));
        Ok(())
    }

    fn accumulate_pass(&mut self, pass: Vec<Option<Tensor>>, mut store: Option<&mut ParamStore>) {
        for (node, g) in self.nodes.iter_mut().zip(pass) {
            let Some(g) = g else { continue };
            if let (Op::Param(pid), Some(store)) = (&node.op, store.as_deref_mut()) {
                if pid.store == store.store_id() {
                    store.accumulate_grad(pid.index, &g);
                }
            }
            match &mut node.grad {
                Some(acc) => acc.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }
    }

    fn backward_pass(&self, root: NodeId) -> Result<Vec<Option<Tensor>>> {
        let rv = self.value(root);
        if !rv.is_scalar() {
            return Err(Error::contract(
                "backward",
                format!("root must hold one sample, has shape {:?}", rv.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::ones(rv.shape()));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].as_ref() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            for (parent, pg) in self.local_grads(i, g) {
                if !self.nodes[parent.0].requires_grad {
                    continue;
                }
                match &mut grads[parent.0] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Ok(grads)
    }

    /// Gradient contributions from node `i` to its parents, given the
    /// gradient `g` of its output.
    fn local_grads(&self, i: usize, g: &Tensor) -> Vec<(NodeId, Tensor)> {
        let node = &self.nodes[i];
        let wants = |n: NodeId| self.nodes[n.0].requires_grad;
        let val = |n: NodeId| &self.nodes[n.0].value;
        match &node.op {
            Op::Leaf | Op::Param(_) => vec![],
            Op::Unary(kind, a) => {
                let x = val(*a);
                let y = &node.value;
                let d: Vec<f64> = match *kind {
                    Unary::Neg => g.data().iter().map(|v| -v).collect(),
                    Unary::Abs => zip2(g, x, |g, x| {
                        if x > 0.0 {
                            g
                        } else if x < 0.0 {
                            -g
                        } else {
                            0.0
                        }
                    }),
                    Unary::Square => zip2(g, x, |g, x| 2.0 * x * g),
                    Unary::Sigmoid => zip2(g, y, |g, y| g * y * (1.0 - y)),
                    Unary::Tanh => zip2(g, y, |g, y| g * (1.0 - y * y)),
                    Unary::LeakyRelu(s) => zip2(g, x, |g, x| if x > 0.0 { g } else { s * g }),
                    Unary::Log => zip2(g, x, |g, x| g / x),
                    Unary::Clamp(lo, hi) => zip2(g, x, |g, x| if (lo..=hi).contains(&x) { g } else { 0.0 }),
                };
                vec![(*a, Tensor::from_parts(x.shape().to_vec(), d))]
            }
            Op::Binary(kind, a, b) => {
                let (x, y) = (val(*a), val(*b));
                let (ga, gb) = match kind {
                    Binary::Add => (g.clone(), g.clone()),
                    Binary::Sub => (g.clone(), g.map(|v| -v)),
                    Binary::Mul => (mul_bc(g, y), mul_bc(g, x)),
                };
                let mut out = vec![];
                if wants(*a) {
                    out.push((*a, reduce_to(ga, x.shape())));
                }
                if wants(*b) {
                    out.push((*b, reduce_to(gb, y.shape())));
                }
                out
            }
            Op::Scale(a, f) => vec![(*a, g.map(|v| v * f))],
            Op::Powi(a, n) => {
                let n = *n;
                let d = zip2(g, val(*a), |g, x| g * n as f64 * x.powi(n - 1));
                vec![(*a, Tensor::from_parts(val(*a).shape().to_vec(), d))]
            }
            Op::Sum(a) => vec![(*a, Tensor::full(val(*a).shape(), g.item()))],
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
            } => {
                let mut out = vec![];
                if wants(*input) {
                    out.push((*input, kernels::conv2d_input_grad(g, val(*kernel), geom)));
                }
                if wants(*kernel) {
                    out.push((*kernel, kernels::conv2d_kernel_grad(val(*input), g, geom)));
                }
                if let Some(b) = bias.filter(|&b| wants(b)) {
                    out.push((b, kernels::channel_sums(g, geom.cout)));
                }
                out
            }
            Op::ConvTranspose2d {
                input,
                kernel,
                bias,
                geom,
            } => {
                let mut out = vec![];
                if wants(*input) {
                    out.push((*input, kernels::conv2d(g, val(*kernel), None, geom)));
                }
                if wants(*kernel) {
                    out.push((*kernel, kernels::conv2d_kernel_grad(g, val(*input), geom)));
                }
                if let Some(b) = bias.filter(|&b| wants(b)) {
                    out.push((b, kernels::channel_sums(g, geom.cin)));
                }
                out
            }
            Op::AvgPool2(a) => vec![(*a, kernels::avg_pool2_adjoint(g))],
            Op::Upsample2(a) => vec![(*a, kernels::upsample_nearest2_adjoint(g))],
            Op::GlobalAvgPool(a) => {
                let s = val(*a).shape();
                let n = (s[0] * s[1]) as f64;
                let per: Vec<f64> = g.data().iter().map(|v| v / n).collect();
                let mut d = Vec::with_capacity(val(*a).len());
                for _ in 0..s[0] * s[1] {
                    d.extend_from_slice(&per);
                }
                vec![(*a, Tensor::from_parts(s.to_vec(), d))]
            }
            Op::Concat { parts, axis } => {
                let (outer, total, inner) = axis_split(g.shape(), *axis);
                let mut offset = 0;
                let mut out = vec![];
                for &p in parts {
                    let ps = val(p).shape();
                    let n = ps[*axis];
                    if wants(p) {
                        let mut d = Vec::with_capacity(val(p).len());
                        for o in 0..outer {
                            let start = (o * total + offset) * inner;
                            d.extend_from_slice(&g.data()[start..start + n * inner]);
                        }
                        out.push((p, Tensor::from_parts(ps.to_vec(), d)));
                    }
                    offset += n;
                }
                out
            }
            Op::Slice { input, axis, start } => {
                let s = val(*input).shape();
                let (outer, n, inner) = axis_split(s, *axis);
                let len = g.shape()[*axis];
                let mut d = vec![0.0; val(*input).len()];
                for o in 0..outer {
                    let dst = (o * n + start) * inner;
                    d[dst..dst + len * inner]
                        .copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
                }
                vec![(*input, Tensor::from_parts(s.to_vec(), d))]
            }
            Op::Reshape(a) => vec![(*a, Tensor::from_parts(val(*a).shape().to_vec(), g.data().to_vec()))],
            Op::FramesToChannels(a) => vec![(*a, channels_to_frames(g, val(*a).shape()))],
            Op::DwtSpatial(a, family) => {
                let c = val(*a).shape()[2];
                let [ll, lh, hl, hh] = split_channels(g, c);
                let bands = SubBands { ll, lh, hl, hh };
                let d = wavelet::synthesize2d(&bands, &family.filter(), Mode::Adjoint)
                    .expect("band shapes come from the forward pass");
                vec![(*a, d)]
            }
            Op::DwtTemporal {
                input,
                family,
                level_lengths,
            } => {
                let d = dwt_temporal_adjoint(g, val(*input).shape(), level_lengths, *family);
                vec![(*input, d)]
            }
        }
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn zip2(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.data().iter().zip(b.data()).map(|(&p, &q)| f(p, q)).collect()
}

/// `g * other` where `other` may be a broadcast scalar.
fn mul_bc(g: &Tensor, other: &Tensor) -> Tensor {
    if other.is_scalar() && !g.is_scalar() {
        let s = other.item();
        g.map(|v| v * s)
    } else if g.is_scalar() && !other.is_scalar() {
        let s = g.item();
        other.map(|v| v * s)
    } else {
        Tensor::from_parts(g.shape().to_vec(), zip2(g, other, |a, b| a * b))
    }
}

/// Sums a broadcast gradient back down to a one-element operand.
fn reduce_to(g: Tensor, shape: &[usize]) -> Tensor {
    if g.shape() == shape {
        g
    } else {
        Tensor::from_parts(shape.to_vec(), vec![g.sum()])
    }
}

fn concat_channels(parts: &[&Tensor], c: usize) -> Tensor {
    let s = parts[0].shape();
    let pixels = s[0] * s[1];
    let mut data = Vec::with_capacity(pixels * c * parts.len());
    for px in 0..pixels {
        for p in parts {
            data.extend_from_slice(&p.data()[px * c..(px + 1) * c]);
        }
    }
    Tensor::from_parts(vec![s[0], s[1], c * parts.len()], data)
}

fn split_channels(t: &Tensor, c: usize) -> [Tensor; 4] {
    let s = t.shape();
    let pixels = s[0] * s[1];
    let mut out: [Vec<f64>; 4] = Default::default();
    for px in t.data().chunks_exact(4 * c) {
        for (k, o) in out.iter_mut().enumerate() {
            o.extend_from_slice(&px[k * c..(k + 1) * c]);
        }
    }
    debug_assert_eq!(out[0].len(), pixels * c);
    out.map(|d| Tensor::from_parts(vec![s[0], s[1], c], d))
}

pub(crate) fn frames_to_channels(x: &Tensor) -> Tensor {
    let s = x.shape();
    let (t, h, w, c) = (s[0], s[1], s[2], s[3]);
    let mut data = vec![0.0; x.len()];
    for f in 0..t {
        for px in 0..h * w {
            let src = (f * h * w + px) * c;
            let dst = px * t * c + f * c;
            data[dst..dst + c].copy_from_slice(&x.data()[src..src + c]);
        }
    }
    Tensor::from_parts(vec![h, w, t * c], data)
}

fn channels_to_frames(g: &Tensor, shape: &[usize]) -> Tensor {
    let (t, h, w, c) = (shape[0], shape[1], shape[2], shape[3]);
    let mut data = vec![0.0; g.len()];
    for f in 0..t {
        for px in 0..h * w {
            let dst = (f * h * w + px) * c;
            let src = px * t * c + f * c;
            data[dst..dst + c].copy_from_slice(&g.data()[src..src + c]);
        }
    }
    Tensor::from_parts(shape.to_vec(), data)
}

/// Transpose of pad-to-power-of-two followed by the multi-level temporal
/// analysis.
fn dwt_temporal_adjoint(g: &Tensor, input_shape: &[usize], level_lengths: &[usize], family: Family) -> Tensor {
    let filter = family.filter();
    let frame = g.len() / g.shape()[0];
    let frames = |start: usize, n: usize| {
        let mut shape = g.shape().to_vec();
        shape[0] = n;
        Tensor::from_parts(shape, g.data()[start * frame..(start + n) * frame].to_vec())
    };
    let deepest = *level_lengths.last().expect("at least one level") / 2;
    let mut current = frames(0, deepest);
    let mut offset = deepest;
    for &len in level_lengths.iter().rev() {
        let high = frames(offset, len / 2);
        offset += len / 2;
        current = wavelet::synthesize_axis(&current, &high, 0, &filter, Mode::Adjoint)
            .expect("band shapes come from the forward pass");
    }
    // Fold padded frames back onto the last real frame.
    let t = input_shape[0];
    let mut d = current.data()[..t * frame].to_vec();
    for extra in current.data()[t * frame..].chunks_exact(frame) {
        for (acc, v) in d[(t - 1) * frame..].iter_mut().zip(extra) {
            *acc += v;
        }
    }
    Tensor::from_parts(input_shape.to_vec(), d)
}

#[cfg(test)]
mod tests;
