//! Reverse-mode differentiation over a per-pass operation tape.
//!
//! Every operation appends a node holding its output value and the indices of
//! its inputs. Nodes are appended in evaluation order, so the tape is always
//! topologically sorted and [`Tape::backward`] is a single reverse sweep.

use std::sync::atomic::{AtomicU64, Ordering};

use super::tensor::{strides, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    idx: usize,
}

impl Var {
    pub fn index(&self) -> usize {
        self.idx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Avg,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

/// Zero padding in cells on each side of the two spatial axes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub const NONE: Padding = Padding {
        top: 0,
        bottom: 0,
        left: 0,
        right: 0,
    };

    /// Padding on the leading side of each axis only.
    pub fn leading(top: usize, left: usize) -> Self {
        Self {
            top,
            left,
            ..Self::NONE
        }
    }

    pub fn symmetric(p: usize) -> Self {
        Self {
            top: p,
            bottom: p,
            left: p,
            right: p,
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    /// Output of an inference tape; carries no backward rule.
    Detached,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddBroadcast {
        a: usize,
        b: usize,
        map: Vec<usize>,
    },
    MulBroadcast {
        a: usize,
        b: usize,
        map: Vec<usize>,
    },
    MulScalar(usize, usize),
    AddConst(usize),
    Scale(usize, f64),
    Activation(usize, Activation),
    Conv2d {
        input: usize,
        kernel: usize,
        bias: usize,
        pad: Padding,
    },
    Pool {
        input: usize,
        mode: PoolMode,
        axis: PoolAxis,
        argmax: Vec<usize>,
    },
    Concat {
        inputs: Vec<usize>,
        axis: usize,
    },
    Reshape(usize),
    MeanAxis {
        input: usize,
        axis: usize,
    },
    Sum(usize),
    Mean(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PoolAxis {
    Spatial,
    Channel,
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records operations for one forward pass.
///
/// A tape is rebuilt for every pass; it owns copies of its leaf tensors and
/// is not meant to be shared across threads.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    recording: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Batch view of a `[C,H,W]` or `[N,C,H,W]` tensor.
#[derive(Debug, Clone, Copy)]
struct Dims4 {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    batched: bool,
}

fn dims4(op: &'static str, shape: &[usize]) -> Result<Dims4> {
    match *shape {
        [c, h, w] => Ok(Dims4 {
            n: 1,
            c,
            h,
            w,
            batched: false,
        }),
        [n, c, h, w] => Ok(Dims4 {
            n,
            c,
            h,
            w,
            batched: true,
        }),
        _ => Err(Error::dim(
            op,
            format!("expected [C,H,W] or [N,C,H,W], got {shape:?}"),
        )),
    }
}

impl Tape {
    /// A tape that records backward rules for tracked leaves.
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            recording: true,
        }
    }

    /// A tape with gradient tracking disabled: leaves are never tracked and
    /// operations keep no backward state.
    pub fn inference() -> Self {
        Self {
            recording: false,
            ..Self::new()
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf. It participates in differentiation when the tensor is
    /// tracked and the tape is recording.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let needs_grad = self.recording && t.is_tracked();
        self.push_node(t, Op::Leaf, needs_grad)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, mut t: Tensor) -> Var {
        t.set_tracked(false);
        self.push_node(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        assert_eq!(v.tape, self.id, "variable belongs to another tape");
        &self.nodes[v.idx].value
    }

    /// Gradient accumulated into a tracked leaf by [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.value(v).grad()
    }

    fn push_node(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        let idx = self.nodes.len();
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var { tape: self.id, idx }
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[usize]) -> Var {
        let needs_grad = self.recording && inputs.iter().any(|&i| self.nodes[i].needs_grad);
        let op = if needs_grad { op } else { Op::Detached };
        self.push_node(value, op, needs_grad)
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.idx >= self.nodes.len() {
            return Err(Error::Contract(format!(
                "variable {} is not on tape {}",
                v.idx, self.id
            )));
        }
        Ok(v.idx)
    }

    fn shape_of(&self, i: usize) -> &[usize] {
        self.nodes[i].value.shape()
    }

    fn data_of(&self, i: usize) -> &[f64] {
        self.nodes[i].value.data()
    }

    // ---------------------------------------------------------------------
    // forward operations
    // ---------------------------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let (sa, sb) = (self.shape_of(ai), self.shape_of(bi));
        let (m, k, n) = match (sa, sb) {
            ([m, k], [k2, n]) if k == k2 => (*m, *k, *n),
            _ => {
                return Err(Error::dim(
                    "matmul",
                    format!("cannot multiply {sa:?} by {sb:?}"),
                ))
            }
        };
        let out = matmul_raw(self.data_of(ai), self.data_of(bi), m, k, n);
        let t = Tensor::new([m, n], out)?;
        Ok(self.push(t, Op::MatMul(ai, bi), &[ai, bi]))
    }

    fn binary_same_shape(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: fn(usize, usize) -> Op,
    ) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        if self.shape_of(ai) != self.shape_of(bi) {
            return Err(Error::dim(
                name,
                format!("{:?} vs {:?}", self.shape_of(ai), self.shape_of(bi)),
            ));
        }
        let data = self
            .data_of(ai)
            .iter()
            .zip(self.data_of(bi))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor::new(self.shape_of(ai).to_vec(), data)?;
        Ok(self.push(t, op(ai, bi), &[ai, bi]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape("mul", a, b, |x, y| x * y, Op::Mul)
    }

    /// `a + b` where `b` has `a`'s rank and every dimension equal or 1.
    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let map = broadcast_map("add_broadcast", self.shape_of(ai), self.shape_of(bi))?;
        let bd = self.data_of(bi);
        let data = self
            .data_of(ai)
            .iter()
            .zip(&map)
            .map(|(&x, &j)| x + bd[j])
            .collect();
        let t = Tensor::new(self.shape_of(ai).to_vec(), data)?;
        Ok(self.push(t, Op::AddBroadcast { a: ai, b: bi, map }, &[ai, bi]))
    }

    /// `a * b` with the same broadcasting rule as [`Tape::add_broadcast`].
    pub fn mul_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let map = broadcast_map("mul_broadcast", self.shape_of(ai), self.shape_of(bi))?;
        let bd = self.data_of(bi);
        let data = self
            .data_of(ai)
            .iter()
            .zip(&map)
            .map(|(&x, &j)| x * bd[j])
            .collect();
        let t = Tensor::new(self.shape_of(ai).to_vec(), data)?;
        Ok(self.push(t, Op::MulBroadcast { a: ai, b: bi, map }, &[ai, bi]))
    }

    /// Multiplies every element of `a` by the single value held in `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let (ai, si) = (self.idx(a)?, self.idx(s)?);
        if self.nodes[si].value.numel() != 1 {
            return Err(Error::dim(
                "mul_scalar",
                format!("scale must hold one value, got {:?}", self.shape_of(si)),
            ));
        }
        let k = self.data_of(si)[0];
        let data = self.data_of(ai).iter().map(|x| x * k).collect();
        let t = Tensor::new(self.shape_of(ai).to_vec(), data)?;
        Ok(self.push(t, Op::MulScalar(ai, si), &[ai, si]))
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Result<Var> {
        let ai = self.idx(a)?;
        let data = self.data_of(ai).iter().map(|x| x + c).collect();
        let t = Tensor::new(self.shape_of(ai).to_vec(), data)?;
        Ok(self.push(t, Op::AddConst(ai), &[ai]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let ai = self.idx(a)?;
        let data = self.data_of(ai).iter().map(|x| x * c).collect();
        let t = Tensor::new(self.shape_of(ai).to_vec(), data)?;
        Ok(self.push(t, Op::Scale(ai, c), &[ai]))
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Result<Var> {
        let ai = self.idx(a)?;
        let data = self
            .data_of(ai)
            .iter()
            .map(|&x| match kind {
                Activation::Relu => x.max(0.0),
                Activation::Sigmoid => sigmoid(x),
            })
            .collect();
        let t = Tensor::new(self.shape_of(ai).to_vec(), data)?;
        Ok(self.push(t, Op::Activation(ai, kind), &[ai]))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.activation(a, Activation::Relu)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.activation(a, Activation::Sigmoid)
    }

    /// Stride-1 cross-correlation with zero padding.
    ///
    /// `input` is `[C_in,H,W]` or `[N,C_in,H,W]`, `kernel` is
    /// `[C_out,C_in,kh,kw]`, `bias` is `[C_out]`.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, pad: Padding) -> Result<Var> {
        let (ii, ki, bi) = (self.idx(input)?, self.idx(kernel)?, self.idx(bias)?);
        let d = dims4("conv2d", self.shape_of(ii))?;
        let (co, kh, kw) = match *self.shape_of(ki) {
            [co, ci, kh, kw] if ci == d.c => (co, kh, kw),
            _ => {
                return Err(Error::dim(
                    "conv2d",
                    format!(
                        "kernel {:?} does not fit input {:?}",
                        self.shape_of(ki),
                        self.shape_of(ii)
                    ),
                ))
            }
        };
        if self.shape_of(bi) != [co] {
            return Err(Error::dim(
                "conv2d",
                format!("bias {:?} must be [{co}]", self.shape_of(bi)),
            ));
        }
        let (ph, pw) = (d.h + pad.top + pad.bottom, d.w + pad.left + pad.right);
        if kh > ph || kw > pw {
            return Err(Error::dim(
                "conv2d",
                format!("kernel {kh}x{kw} larger than padded input {ph}x{pw}"),
            ));
        }
        let geo = ConvGeometry {
            d,
            co,
            kh,
            kw,
            ho: ph - kh + 1,
            wo: pw - kw + 1,
            pad,
        };
        let out = conv_forward(&geo, self.data_of(ii), self.data_of(ki), self.data_of(bi));
        let shape = if d.batched {
            vec![d.n, co, geo.ho, geo.wo]
        } else {
            vec![co, geo.ho, geo.wo]
        };
        let t = Tensor::new(shape, out)?;
        Ok(self.push(
            t,
            Op::Conv2d {
                input: ii,
                kernel: ki,
                bias: bi,
                pad,
            },
            &[ii, ki, bi],
        ))
    }

    /// Global pooling over all H·W positions of each channel:
    /// `[C,H,W] -> [C]`, `[N,C,H,W] -> [N,C]`.
    pub fn pool_spatial(&mut self, input: Var, mode: PoolMode) -> Result<Var> {
        self.pool(input, mode, PoolAxis::Spatial)
    }

    /// Pooling across channels at each position:
    /// `[C,H,W] -> [1,H,W]`, `[N,C,H,W] -> [N,1,H,W]`.
    pub fn pool_channel(&mut self, input: Var, mode: PoolMode) -> Result<Var> {
        self.pool(input, mode, PoolAxis::Channel)
    }

    fn pool(&mut self, input: Var, mode: PoolMode, axis: PoolAxis) -> Result<Var> {
        let ii = self.idx(input)?;
        let d = dims4("pool", self.shape_of(ii))?;
        let x = self.data_of(ii);
        let groups = pool_groups(&d, axis);
        let mut out = Vec::with_capacity(groups.len());
        let mut argmax = Vec::new();
        for (base, step, count) in groups {
            match mode {
                PoolMode::Avg => {
                    let s: f64 = (0..count).map(|k| x[base + k * step]).sum();
                    out.push(s / count as f64);
                }
                PoolMode::Max => {
                    // strict comparison keeps the first maximum in row-major order
                    let mut best = base;
                    for k in 1..count {
                        let j = base + k * step;
                        if x[j] > x[best] {
                            best = j;
                        }
                    }
                    out.push(x[best]);
                    argmax.push(best);
                }
            }
        }
        let shape = match (axis, d.batched) {
            (PoolAxis::Spatial, false) => vec![d.c],
            (PoolAxis::Spatial, true) => vec![d.n, d.c],
            (PoolAxis::Channel, false) => vec![1, d.h, d.w],
            (PoolAxis::Channel, true) => vec![d.n, 1, d.h, d.w],
        };
        debug_assert_eq!(out.len(), shape.iter().product::<usize>());
        let t = Tensor::new(shape, out)?;
        Ok(self.push(
            t,
            Op::Pool {
                input: ii,
                mode,
                axis,
                argmax,
            },
            &[ii],
        ))
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let idxs = inputs
            .iter()
            .map(|&v| self.idx(v))
            .collect::<Result<Vec<_>>>()?;
        let first = match idxs.first() {
            Some(&i) => self.shape_of(i).to_vec(),
            None => return Err(Error::dim("concat", "no inputs")),
        };
        if axis >= first.len() {
            return Err(Error::dim(
                "concat",
                format!("axis {axis} out of range for {first:?}"),
            ));
        }
        let mut total = 0;
        for &i in &idxs {
            let s = self.shape_of(i);
            let compatible = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(k, (a, b))| k == axis || a == b);
            if !compatible {
                return Err(Error::dim(
                    "concat",
                    format!("{s:?} incompatible with {first:?} on axis {axis}"),
                ));
            }
            total += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &i in &idxs {
                let block = self.shape_of(i)[axis] * inner;
                out.extend_from_slice(&self.data_of(i)[o * block..(o + 1) * block]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::Concat { inputs: idxs.clone(), axis }, &idxs))
    }

    pub fn reshape(&mut self, a: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let ai = self.idx(a)?;
        let t = self.nodes[ai].value.reshaped(shape)?;
        Ok(self.push(t, Op::Reshape(ai), &[ai]))
    }

    /// Mean over one axis, removing it.
    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let ai = self.idx(a)?;
        let shape = self.shape_of(ai).to_vec();
        if axis >= shape.len() {
            return Err(Error::dim(
                "mean_axis",
                format!("axis {axis} out of range for {shape:?}"),
            ));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let x = self.data_of(ai);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..len {
                let src = &x[(o * len + k) * inner..(o * len + k + 1) * inner];
                for (dst, v) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *dst += v;
                }
            }
        }
        out.iter_mut().for_each(|v| *v /= len as f64);
        let mut new_shape: Vec<usize> = shape
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != axis)
            .map(|(_, &d)| d)
            .collect();
        if new_shape.is_empty() {
            new_shape.push(1);
        }
        let t = Tensor::new(new_shape, out)?;
        Ok(self.push(t, Op::MeanAxis { input: ai, axis }, &[ai]))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ai = self.idx(a)?;
        let s = self.data_of(ai).iter().sum();
        Ok(self.push(Tensor::scalar(s), Op::Sum(ai), &[ai]))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let ai = self.idx(a)?;
        let x = self.data_of(ai);
        let s = x.iter().sum::<f64>() / x.len() as f64;
        Ok(self.push(Tensor::scalar(s), Op::Mean(ai), &[ai]))
    }

    // ---------------------------------------------------------------------
    // backward
    // ---------------------------------------------------------------------

    /// Propagates d`loss`/d(node) back to every tracked leaf, summing
    /// contributions from repeated uses. Gradients accumulate into the leaf
    /// tensors' `grad` buffers.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let li = self.idx(loss)?;
        if !self.recording {
            return Err(Error::Contract(
                "backward called on an inference tape".into(),
            ));
        }
        if self.nodes[li].value.numel() != 1 {
            return Err(Error::Contract(format!(
                "loss must be a scalar, got shape {:?}",
                self.nodes[li].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; li + 1];
        grads[li] = Some(vec![1.0]);
        for i in (0..=li).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                self.nodes[i].value.accumulate_grad(&g);
                continue;
            }
            self.backward_node(i, &g, &mut grads);
        }
        Ok(())
    }

    fn backward_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let needs = |j: usize| nodes[j].needs_grad;
        let mut acc = |j: usize, contrib: Vec<f64>| {
            if !nodes[j].needs_grad {
                return;
            }
            match &mut grads[j] {
                Some(existing) => existing.iter_mut().zip(&contrib).for_each(|(a, b)| *a += b),
                slot @ None => *slot = Some(contrib),
            }
        };
        let val = |j: usize| nodes[j].value.data();
        match &nodes[i].op {
            Op::Leaf | Op::Detached => {}
            &Op::MatMul(a, b) => {
                let (m, k) = (nodes[a].value.shape()[0], nodes[a].value.shape()[1]);
                let n = nodes[b].value.shape()[1];
                if needs(a) {
                    // dA = dC · Bᵀ
                    let bd = val(b);
                    let mut da = vec![0.0; m * k];
                    for r in 0..m {
                        for p in 0..k {
                            let row_g = &g[r * n..(r + 1) * n];
                            let row_b = &bd[p * n..(p + 1) * n];
                            da[r * k + p] = row_g.iter().zip(row_b).map(|(x, y)| x * y).sum();
                        }
                    }
                    acc(a, da);
                }
                if needs(b) {
                    // dB = Aᵀ · dC
                    let ad = val(a);
                    let mut db = vec![0.0; k * n];
                    for r in 0..m {
                        for p in 0..k {
                            let s = ad[r * k + p];
                            if s == 0.0 {
                                continue;
                            }
                            for (dst, gv) in db[p * n..(p + 1) * n].iter_mut().zip(&g[r * n..(r + 1) * n]) {
                                *dst += s * gv;
                            }
                        }
                    }
                    acc(b, db);
                }
            }
            &Op::Add(a, b) => {
                acc(a, g.to_vec());
                acc(b, g.to_vec());
            }
            &Op::Sub(a, b) => {
                acc(a, g.to_vec());
                acc(b, g.iter().map(|x| -x).collect());
            }
            &Op::Mul(a, b) => {
                if needs(a) {
                    acc(a, g.iter().zip(val(b)).map(|(x, y)| x * y).collect());
                }
                if needs(b) {
                    acc(b, g.iter().zip(val(a)).map(|(x, y)| x * y).collect());
                }
            }
            Op::AddBroadcast { a, b, map } => {
                acc(*a, g.to_vec());
                if needs(*b) {
                    let mut db = vec![0.0; nodes[*b].value.numel()];
                    for (gv, &j) in g.iter().zip(map) {
                        db[j] += gv;
                    }
                    acc(*b, db);
                }
            }
            Op::MulBroadcast { a, b, map } => {
                if needs(*a) {
                    let bd = val(*b);
                    acc(*a, g.iter().zip(map).map(|(gv, &j)| gv * bd[j]).collect());
                }
                if needs(*b) {
                    let ad = val(*a);
                    let mut db = vec![0.0; nodes[*b].value.numel()];
                    for ((gv, &j), x) in g.iter().zip(map).zip(ad) {
                        db[j] += gv * x;
                    }
                    acc(*b, db);
                }
            }
            &Op::MulScalar(a, s) => {
                if needs(a) {
                    let k = val(s)[0];
                    acc(a, g.iter().map(|x| x * k).collect());
                }
                if needs(s) {
                    let ds = g.iter().zip(val(a)).map(|(x, y)| x * y).sum();
                    acc(s, vec![ds]);
                }
            }
            &Op::AddConst(a) => acc(a, g.to_vec()),
            &Op::Scale(a, c) => acc(a, g.iter().map(|x| x * c).collect()),
            &Op::Activation(a, kind) => {
                let da = match kind {
                    Activation::Relu => g
                        .iter()
                        .zip(val(a))
                        .map(|(gv, &x)| if x > 0.0 { *gv } else { 0.0 })
                        .collect(),
                    Activation::Sigmoid => g
                        .iter()
                        .zip(nodes[i].value.data())
                        .map(|(gv, &y)| gv * y * (1.0 - y))
                        .collect(),
                };
                acc(a, da);
            }
            &Op::Conv2d {
                input,
                kernel,
                bias,
                pad,
            } => {
                let d = dims4("conv2d", nodes[input].value.shape()).expect("validated in forward");
                let ks = nodes[kernel].value.shape();
                let out_shape = nodes[i].value.shape();
                let geo = ConvGeometry {
                    d,
                    co: ks[0],
                    kh: ks[2],
                    kw: ks[3],
                    ho: out_shape[out_shape.len() - 2],
                    wo: out_shape[out_shape.len() - 1],
                    pad,
                };
                let (di, dk, db) = conv_backward(&geo, val(input), val(kernel), g, needs(input), needs(kernel));
                if let Some(di) = di {
                    acc(input, di);
                }
                if let Some(dk) = dk {
                    acc(kernel, dk);
                }
                acc(bias, db);
            }
            Op::Pool {
                input,
                mode,
                axis,
                argmax,
            } => {
                let d = dims4("pool", nodes[*input].value.shape()).expect("validated in forward");
                let mut dx = vec![0.0; nodes[*input].value.numel()];
                match mode {
                    PoolMode::Avg => {
                        for ((base, step, count), gv) in pool_groups(&d, *axis).into_iter().zip(g) {
                            let share = gv / count as f64;
                            for k in 0..count {
                                dx[base + k * step] += share;
                            }
                        }
                    }
                    PoolMode::Max => {
                        for (&j, gv) in argmax.iter().zip(g) {
                            dx[j] += gv;
                        }
                    }
                }
                acc(*input, dx);
            }
            Op::Concat { inputs, axis } => {
                let shape = nodes[i].value.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[*axis + 1..].iter().product();
                let total_block = shape[*axis] * inner;
                let mut offset = 0;
                for &j in inputs {
                    let block = nodes[j].value.shape()[*axis] * inner;
                    if needs(j) {
                        let mut dj = Vec::with_capacity(outer * block);
                        for o in 0..outer {
                            let start = o * total_block + offset;
                            dj.extend_from_slice(&g[start..start + block]);
                        }
                        acc(j, dj);
                    }
                    offset += block;
                }
            }
            &Op::Reshape(a) => acc(a, g.to_vec()),
            &Op::MeanAxis { input, axis } => {
                let shape = nodes[input].value.shape();
                let outer: usize = shape[..axis].iter().product();
                let len = shape[axis];
                let inner: usize = shape[axis + 1..].iter().product();
                let mut dx = vec![0.0; nodes[input].value.numel()];
                for o in 0..outer {
                    let gsrc = &g[o * inner..(o + 1) * inner];
                    for k in 0..len {
                        let dst = &mut dx[(o * len + k) * inner..(o * len + k + 1) * inner];
                        for (dv, gv) in dst.iter_mut().zip(gsrc) {
                            *dv = gv / len as f64;
                        }
                    }
                }
                acc(input, dx);
            }
            &Op::Sum(a) => acc(a, vec![g[0]; nodes[a].value.numel()]),
            &Op::Mean(a) => {
                let n = nodes[a].value.numel();
                acc(a, vec![g[0] / n as f64; n]);
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for r in 0..m {
        let row = &mut out[r * n..(r + 1) * n];
        for p in 0..k {
            let s = a[r * k + p];
            if s == 0.0 {
                continue;
            }
            for (dst, bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *dst += s * bv;
            }
        }
    }
    out
}

/// For every flat index of `a_shape`, the flat index into `b_shape` it reads.
fn broadcast_map(op: &'static str, a_shape: &[usize], b_shape: &[usize]) -> Result<Vec<usize>> {
    let ok = a_shape.len() == b_shape.len()
        && a_shape
            .iter()
            .zip(b_shape)
            .all(|(&a, &b)| b == a || b == 1);
    if !ok {
        return Err(Error::dim(
            op,
            format!("{b_shape:?} does not broadcast onto {a_shape:?}"),
        ));
    }
    let a_strides = strides(a_shape);
    let b_strides = strides(b_shape);
    let numel: usize = a_shape.iter().product();
    let map = (0..numel)
        .map(|flat| {
            let mut rem = flat;
            let mut j = 0;
            for k in 0..a_shape.len() {
                let coord = rem / a_strides[k];
                rem %= a_strides[k];
                if b_shape[k] != 1 {
                    j += coord * b_strides[k];
                }
            }
            j
        })
        .collect();
    Ok(map)
}

/// `(base, step, count)` per pooled output element, in output order.
fn pool_groups(d: &Dims4, axis: PoolAxis) -> Vec<(usize, usize, usize)> {
    let hw = d.h * d.w;
    let mut groups = Vec::new();
    for n in 0..d.n {
        match axis {
            PoolAxis::Spatial => {
                for c in 0..d.c {
                    groups.push(((n * d.c + c) * hw, 1, hw));
                }
            }
            PoolAxis::Channel => {
                for p in 0..hw {
                    groups.push((n * d.c * hw + p, hw, d.c));
                }
            }
        }
    }
    groups
}

struct ConvGeometry {
    d: Dims4,
    co: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    pad: Padding,
}

impl ConvGeometry {
    /// Output rows `y` for which input row `y + ky - pad.top` is in bounds.
    fn rows(&self, ky: usize) -> std::ops::Range<usize> {
        let lo = self.pad.top.saturating_sub(ky);
        let hi = (self.d.h + self.pad.top).saturating_sub(ky).min(self.ho);
        lo..hi.max(lo)
    }

    fn cols(&self, kx: usize) -> std::ops::Range<usize> {
        let lo = self.pad.left.saturating_sub(kx);
        let hi = (self.d.w + self.pad.left).saturating_sub(kx).min(self.wo);
        lo..hi.max(lo)
    }
}

fn conv_forward(geo: &ConvGeometry, x: &[f64], k: &[f64], bias: &[f64]) -> Vec<f64> {
    let ConvGeometry {
        d, co, kh, kw, ho, wo, pad, ..
    } = *geo;
    let mut out = vec![0.0; d.n * co * ho * wo];
    for n in 0..d.n {
        for o in 0..co {
            let out_map = &mut out[(n * co + o) * ho * wo..(n * co + o + 1) * ho * wo];
            out_map.fill(bias[o]);
            for c in 0..d.c {
                let in_map = &x[(n * d.c + c) * d.h * d.w..(n * d.c + c + 1) * d.h * d.w];
                for ky in 0..kh {
                    let rows = geo.rows(ky);
                    for kx in 0..kw {
                        let wgt = k[((o * d.c + c) * kh + ky) * kw + kx];
                        if wgt == 0.0 {
                            continue;
                        }
                        let cols = geo.cols(kx);
                        for y in rows.clone() {
                            let iy = y + ky - pad.top;
                            let src = &in_map[iy * d.w..(iy + 1) * d.w];
                            let dst = &mut out_map[y * wo..(y + 1) * wo];
                            for xo in cols.clone() {
                                dst[xo] += wgt * src[xo + kx - pad.left];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

type ConvGrads = (Option<Vec<f64>>, Option<Vec<f64>>, Vec<f64>);

fn conv_backward(
    geo: &ConvGeometry,
    x: &[f64],
    k: &[f64],
    g: &[f64],
    want_input: bool,
    want_kernel: bool,
) -> ConvGrads {
    let ConvGeometry {
        d, co, kh, kw, ho, wo, pad, ..
    } = *geo;
    let mut dx = want_input.then(|| vec![0.0; x.len()]);
    let mut dk = want_kernel.then(|| vec![0.0; k.len()]);
    let mut db = vec![0.0; co];
    for n in 0..d.n {
        for o in 0..co {
            let g_map = &g[(n * co + o) * ho * wo..(n * co + o + 1) * ho * wo];
            db[o] += g_map.iter().sum::<f64>();
            for c in 0..d.c {
                let base = (n * d.c + c) * d.h * d.w;
                for ky in 0..kh {
                    let rows = geo.rows(ky);
                    for kx in 0..kw {
                        let widx = ((o * d.c + c) * kh + ky) * kw + kx;
                        let cols = geo.cols(kx);
                        let mut wsum = 0.0;
                        for y in rows.clone() {
                            let iy = y + ky - pad.top;
                            for xo in cols.clone() {
                                let gv = g_map[y * wo + xo];
                                let ix = base + iy * d.w + xo + kx - pad.left;
                                wsum += gv * x[ix];
                                if let Some(dx) = dx.as_mut() {
                                    dx[ix] += gv * k[widx];
                                }
                            }
                        }
                        if let Some(dk) = dk.as_mut() {
                            dk[widx] += wsum;
                        }
                    }
                }
            }
        }
    }
    (dx, dk, db)
}
