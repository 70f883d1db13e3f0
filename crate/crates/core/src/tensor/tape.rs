//! Define-by-run reverse-mode autodiff.
//!
//! Every op appends a node holding its forward value. Nodes are only
//! differentiated when at least one input requires a gradient. `backward`
//! walks the node list in reverse, so parents always precede consumers and
//! each node is visited once; gradients flowing into a shared parent are
//! summed.

use super::gemm::{gemm, MatMut, MatRef};
use super::lstm_kernel::{self, LstmCache, LstmDims};
use super::{Tensor, CLAMP_FLOOR};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Generic forward ops, usable through [`Tape::apply`].
#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    MatMul,
    /// Adds a rank-1 bias along the last axis.
    AddBias,
    Sigmoid,
    Tanh,
    Exp,
    /// Natural log with inputs clamped to [`CLAMP_FLOOR`].
    Log,
    Scale(f64),
    /// Sum over one axis (removing it), or over everything into a scalar.
    Sum(Option<usize>),
    Mean(Option<usize>),
    Concat(usize),
    Reshape(Vec<usize>),
    Slice {
        axis: usize,
        start: usize,
        len: usize,
    },
    /// Softmax over the last axis.
    Softmax,
}

impl OpKind {
    fn name(&self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "subtract",
            OpKind::Mul => "multiply",
            OpKind::MatMul => "matmul",
            OpKind::AddBias => "add_bias",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Tanh => "tanh",
            OpKind::Exp => "exp",
            OpKind::Log => "log",
            OpKind::Scale(_) => "scale",
            OpKind::Sum(_) => "sum",
            OpKind::Mean(_) => "mean",
            OpKind::Concat(_) => "concat",
            OpKind::Reshape(_) => "reshape",
            OpKind::Slice { .. } => "slice",
            OpKind::Softmax => "softmax",
        }
    }
}

/// `shape` split around `axis` into (outer, axis length, inner) extents.
#[derive(Debug, Clone, Copy)]
struct AxisSplit {
    outer: usize,
    len: usize,
    inner: usize,
}

fn split_axis(shape: &[usize], axis: usize) -> AxisSplit {
    AxisSplit {
        outer: shape[..axis].iter().product(),
        len: shape[axis],
        inner: shape[axis + 1..].iter().product(),
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    AddBias { x: Var, bias: Var },
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Scale(Var, f64),
    Sum { x: Var, split: AxisSplit, scale: f64 },
    Concat { inputs: Vec<Var>, outer: usize, widths: Vec<usize> },
    Reshape(Var),
    Slice { x: Var, split: AxisSplit, start: usize, len: usize },
    Softmax { x: Var, cols: usize },
    CrossEntropy { probs: Var, labels: Vec<usize>, cols: usize },
    Conv1d { x: Var, w: Var, b: Var, dims: ConvDims },
    BatchNorm(Box<BatchNormSaved>),
    Lstm(Box<LstmSaved>),
}

#[derive(Debug, Clone, Copy)]
struct ConvDims {
    n: usize,
    c_in: usize,
    len: usize,
    c_out: usize,
    k: usize,
    l_out: usize,
}

#[derive(Debug, Clone)]
struct BatchNormSaved {
    x: Var,
    gamma: Var,
    beta: Var,
    split: AxisSplit,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    batch_stats: bool,
}

#[derive(Debug, Clone)]
struct LstmSaved {
    x: Var,
    w: Var,
    u: Var,
    b: Var,
    dims: LstmDims,
    return_sequences: bool,
    cache: LstmCache,
}

#[derive(Debug, Clone)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    requires_grad: bool,
    op: Op,
}

/// Statistics used by [`Tape::batch_norm`].
#[derive(Debug, Clone, Copy)]
pub enum NormStats<'a> {
    /// Normalize with the statistics of the current batch.
    Batch,
    /// Normalize with fixed (running) statistics.
    Fixed { mean: &'a [f64], var: &'a [f64] },
}

/// Result of a batch-norm forward: output node plus the per-feature batch
/// mean and (biased) variance that were used.
#[derive(Debug, Clone)]
pub struct NormOutput {
    pub out: Var,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    tags: Vec<(usize, Var)>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, requires_grad: bool, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a leaf holding a copy of `t`; it is differentiable when
    /// `t.requires_grad()`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), t.requires_grad(), Op::Leaf)
    }

    /// Records a non-differentiable leaf, taking ownership of `t`.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), false, Op::Leaf)
    }

    /// Records a leaf and remembers it under an external `tag` (e.g. a
    /// parameter index) so gradients can be routed back.
    pub fn param(&mut self, tag: usize, t: &Tensor) -> Var {
        let v = self.leaf(t);
        self.tags.push((tag, v));
        v
    }

    pub fn tagged(&self) -> &[(usize, Var)] {
        &self.tags
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Copies a node's value out as a tensor.
    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("tape nodes hold valid shapes")
    }

    /// Applies a generic op.
    pub fn apply(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var> {
        let arity = match kind {
            OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::MatMul | OpKind::AddBias => Some(2),
            OpKind::Concat(_) => None,
            _ => Some(1),
        };
        if let Some(n) = arity {
            if inputs.len() != n {
                let shapes: Vec<&[usize]> = inputs.iter().map(|v| self.shape(*v)).collect();
                return Err(Error::dim(kind.name(), &shapes, format!("expected {n} inputs, got {}", inputs.len())));
            }
        }
        match kind {
            OpKind::Add => self.elementwise2(inputs[0], inputs[1], "add", |a, b| a + b, Op::Add),
            OpKind::Sub => self.elementwise2(inputs[0], inputs[1], "subtract", |a, b| a - b, Op::Sub),
            OpKind::Mul => self.elementwise2(inputs[0], inputs[1], "multiply", |a, b| a * b, Op::Mul),
            OpKind::MatMul => self.matmul(inputs[0], inputs[1]),
            OpKind::AddBias => self.add_bias(inputs[0], inputs[1]),
            OpKind::Sigmoid => Ok(self.sigmoid(inputs[0])),
            OpKind::Tanh => Ok(self.tanh(inputs[0])),
            OpKind::Exp => Ok(self.exp(inputs[0])),
            OpKind::Log => Ok(self.log(inputs[0])),
            OpKind::Scale(s) => Ok(self.scale(inputs[0], s)),
            OpKind::Sum(axis) => self.sum(inputs[0], axis),
            OpKind::Mean(axis) => self.mean(inputs[0], axis),
            OpKind::Concat(axis) => self.concat(inputs, axis),
            OpKind::Reshape(shape) => self.reshape(inputs[0], &shape),
            OpKind::Slice { axis, start, len } => self.slice(inputs[0], axis, start, len),
            OpKind::Softmax => self.softmax(inputs[0]),
        }
    }

    fn elementwise2(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: fn(Var, Var) -> Op,
    ) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::dim(name, &[sa, sb], "elementwise shapes must be equal"));
        }
        let value = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| f(x, y)).collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(sa.to_vec(), value, rg, op(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Mul, &[a, b])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", &[sa, sb], "expected [m x k] @ [k x n]"));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut value = vec![0.0; m * n];
        gemm(
            1.0,
            MatRef::dense(self.value(a), m, k),
            MatRef::dense(self.value(b), k, n),
            0.0,
            MatMut::dense(&mut value, m, n),
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![m, n], value, rg, Op::MatMul { a, b, m, k, n }))
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        let last = *sx.last().unwrap_or(&0);
        if sb.len() != 1 || sb[0] != last {
            return Err(Error::dim("add_bias", &[sx, sb], "bias must match the last axis"));
        }
        let b = self.value(bias);
        let value: Vec<f64> = self
            .value(x)
            .chunks(last)
            .flat_map(|row| row.iter().zip(b).map(|(v, c)| v + c))
            .collect();
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(sx.to_vec(), value, rg, Op::AddBias { x, bias }))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(x).iter().map(|&v| f(v)).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(shape, value, rg, op)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(CLAMP_FLOOR).ln(), Op::Log(x))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.unary(x, |v| v * s, Op::Scale(x, s))
    }

    fn reduce(&mut self, x: Var, axis: Option<usize>, mean: bool, name: &'static str) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (split, out_shape) = match axis {
            None => (
                AxisSplit {
                    outer: 1,
                    len: shape.iter().product(),
                    inner: 1,
                },
                vec![1],
            ),
            Some(a) if a < shape.len() => {
                let mut s = shape.clone();
                s.remove(a);
                if s.is_empty() {
                    s.push(1);
                }
                (split_axis(&shape, a), s)
            }
            Some(a) => return Err(Error::dim(name, &[&shape], format!("axis {a} out of range"))),
        };
        let scale = if mean { 1.0 / split.len as f64 } else { 1.0 };
        let src = self.value(x);
        let mut value = vec![0.0; split.outer * split.inner];
        if split.inner == 1 {
            for (v, chunk) in value.iter_mut().zip(src.chunks_exact(split.len)) {
                *v = chunk.iter().sum();
            }
        } else {
            for o in 0..split.outer {
                for l in 0..split.len {
                    let base = (o * split.len + l) * split.inner;
                    let dst = &mut value[o * split.inner..(o + 1) * split.inner];
                    dst.iter_mut().zip(&src[base..base + split.inner]).for_each(|(d, s)| *d += s);
                }
            }
        }
        if mean {
            value.iter_mut().for_each(|v| *v *= scale);
        }
        let rg = self.rg(x);
        Ok(self.push(out_shape, value, rg, Op::Sum { x, split, scale }))
    }

    pub fn sum(&mut self, x: Var, axis: Option<usize>) -> Result<Var> {
        self.reduce(x, axis, false, "sum")
    }

    pub fn mean(&mut self, x: Var, axis: Option<usize>) -> Result<Var> {
        self.reduce(x, axis, true, "mean")
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let Some(&first) = inputs.first() else {
            return Err(Error::dim("concat", &[], "no inputs"));
        };
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(Error::dim("concat", &[&base], format!("axis {axis} out of range")));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                let shapes: Vec<&[usize]> = inputs.iter().map(|v| self.shape(*v)).collect();
                return Err(Error::dim("concat", &shapes, "shapes differ off the concat axis"));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let widths: Vec<usize> = inputs.iter().map(|v| self.shape(*v)[axis] * inner).collect();
        let row: usize = widths.iter().sum();
        let mut value = Vec::with_capacity(outer * row);
        for o in 0..outer {
            for (&v, &w) in inputs.iter().zip(&widths) {
                value.extend_from_slice(&self.value(v)[o * w..(o + 1) * w]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let rg = inputs.iter().any(|&v| self.rg(v));
        Ok(self.push(
            shape,
            value,
            rg,
            Op::Concat {
                inputs: inputs.to_vec(),
                outer,
                widths,
            },
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let old = self.shape(x);
        if shape.iter().product::<usize>() != old.iter().product::<usize>() || shape.contains(&0) {
            return Err(Error::dim("reshape", &[old, shape], "element count differs"));
        }
        let value = self.value(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(shape.to_vec(), value, rg, Op::Reshape(x)))
    }

    /// Narrows `x` to `[start, start + len)` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::dim(
                "slice",
                &[&shape],
                format!("cannot take [{start}, {}) on axis {axis}", start + len),
            ));
        }
        let split = split_axis(&shape, axis);
        let src = self.value(x);
        let mut value = Vec::with_capacity(split.outer * len * split.inner);
        for o in 0..split.outer {
            let from = (o * split.len + start) * split.inner;
            value.extend_from_slice(&src[from..from + len * split.inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let rg = self.rg(x);
        Ok(self.push(out_shape, value, rg, Op::Slice { x, split, start, len }))
    }

    /// Row-wise softmax over the last axis, computed with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.is_empty() || shape.len() > 2 {
            return Err(Error::dim("softmax", &[&shape], "expected rank-1 or rank-2 logits"));
        }
        let cols = *shape.last().unwrap();
        let src = self.value(x);
        if src.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("softmax requires finite logits".into()));
        }
        let mut value = Vec::with_capacity(src.len());
        for row in src.chunks(cols) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let start = value.len();
            value.extend(row.iter().map(|v| (v - max).exp()));
            let total: f64 = value[start..].iter().sum();
            value[start..].iter_mut().for_each(|v| *v /= total);
        }
        let rg = self.rg(x);
        Ok(self.push(shape, value, rg, Op::Softmax { x, cols }))
    }

    /// Mean over the batch of `-ln p[true class]`, with probabilities clamped
    /// to `[CLAMP_FLOOR, 1]`.
    pub fn cross_entropy(&mut self, probs: Var, labels: &[usize]) -> Result<Var> {
        let shape = self.shape(probs).to_vec();
        if shape.len() != 2 || shape[0] != labels.len() {
            return Err(Error::dim(
                "cross_entropy",
                &[&shape],
                format!("expected [batch x classes] with {} labels", labels.len()),
            ));
        }
        let cols = shape[1];
        let p = self.value(probs);
        let mut total = 0.0;
        for (r, (row, &label)) in p.chunks(cols).zip(labels).enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(Error::Validation(format!("probability row {r} sums to {s}, not 1")));
            }
            if label >= cols {
                return Err(Error::Validation(format!("label {label} out of range for {cols} classes")));
            }
            total -= row[label].clamp(CLAMP_FLOOR, 1.0).ln();
        }
        let value = vec![total / labels.len() as f64];
        let rg = self.rg(probs);
        Ok(self.push(
            vec![1],
            value,
            rg,
            Op::CrossEntropy {
                probs,
                labels: labels.to_vec(),
                cols,
            },
        ))
    }

    /// Categorical cross-entropy against one-hot label rows.
    pub fn categorical_cross_entropy(&mut self, probs: Var, one_hot: &Tensor) -> Result<Var> {
        if one_hot.shape() != self.shape(probs) {
            return Err(Error::dim(
                "categorical_cross_entropy",
                &[self.shape(probs), one_hot.shape()],
                "labels must match probabilities",
            ));
        }
        let cols = one_hot.shape()[1];
        let mut labels = Vec::with_capacity(one_hot.shape()[0]);
        for (r, row) in one_hot.data().chunks(cols).enumerate() {
            let ones: Vec<usize> = row.iter().enumerate().filter(|(_, &v)| v == 1.0).map(|(i, _)| i).collect();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones.len() != 1 || zeros != cols - 1 {
                return Err(Error::Validation(format!("label row {r} is not one-hot")));
            }
            labels.push(ones[0]);
        }
        self.cross_entropy(probs, &labels)
    }

    /// Valid 1-D cross-correlation plus bias: `x [N x Cin x L]`,
    /// `w [Cout x Cin x K]`, `b [Cout]` gives `[N x Cout x (L - K + 1)]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sx.len() != 3 || sw.len() != 3 || sb.len() != 1 || sw[1] != sx[1] || sb[0] != sw[0] {
            return Err(Error::dim(
                "conv1d",
                &[sx, sw, sb],
                "expected x [N x Cin x L], w [Cout x Cin x K], b [Cout]",
            ));
        }
        let (n, c_in, len, c_out, k) = (sx[0], sx[1], sx[2], sw[0], sw[2]);
        if len < k {
            return Err(Error::dim("conv1d", &[sx, sw], format!("input length {len} shorter than kernel {k}")));
        }
        let l_out = len - k + 1;
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let mut value = vec![0.0; n * c_out * l_out];
        for s in 0..n {
            for co in 0..c_out {
                let out = &mut value[(s * c_out + co) * l_out..(s * c_out + co + 1) * l_out];
                out.iter_mut().for_each(|v| *v = bv[co]);
                for ci in 0..c_in {
                    let xs = &xv[(s * c_in + ci) * len..(s * c_in + ci + 1) * len];
                    let ws = &wv[(co * c_in + ci) * k..(co * c_in + ci + 1) * k];
                    for (j, &wj) in ws.iter().enumerate() {
                        out.iter_mut().zip(&xs[j..j + l_out]).for_each(|(o, &xv)| *o += wj * xv);
                    }
                }
            }
        }
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        let dims = ConvDims {
            n,
            c_in,
            len,
            c_out,
            k,
            l_out,
        };
        Ok(self.push(vec![n, c_out, l_out], value, rg, Op::Conv1d { x, w, b, dims }))
    }

    /// Batch normalization over `axis` (the feature axis); statistics are
    /// taken over every other axis.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        axis: usize,
        eps: f64,
        stats: NormStats<'_>,
    ) -> Result<NormOutput> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::dim("batch_norm", &[&shape], format!("axis {axis} out of range")));
        }
        let split = split_axis(&shape, axis);
        let f = split.len;
        if self.shape(gamma) != [f] || self.shape(beta) != [f] {
            return Err(Error::dim(
                "batch_norm",
                &[&shape, self.shape(gamma), self.shape(beta)],
                "gamma/beta must match the feature axis",
            ));
        }
        let count = (split.outer * split.inner) as f64;
        let xv = self.value(x);
        let (mean, var, batch_stats) = match stats {
            NormStats::Batch => {
                let mut mean = vec![0.0; f];
                let mut var = vec![0.0; f];
                for o in 0..split.outer {
                    for (c, m) in mean.iter_mut().enumerate() {
                        let base = (o * f + c) * split.inner;
                        *m += xv[base..base + split.inner].iter().sum::<f64>();
                    }
                }
                mean.iter_mut().for_each(|m| *m /= count);
                for o in 0..split.outer {
                    for c in 0..f {
                        let base = (o * f + c) * split.inner;
                        var[c] += xv[base..base + split.inner].iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>();
                    }
                }
                var.iter_mut().for_each(|v| *v /= count);
                (mean, var, true)
            }
            NormStats::Fixed { mean, var } => {
                if mean.len() != f || var.len() != f {
                    return Err(Error::dim("batch_norm", &[&shape], "running statistics size mismatch"));
                }
                (mean.to_vec(), var.to_vec(), false)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let (g, b) = (self.value(gamma), self.value(beta));
        let mut xhat = vec![0.0; xv.len()];
        let mut value = vec![0.0; xv.len()];
        for o in 0..split.outer {
            for c in 0..f {
                let base = (o * f + c) * split.inner;
                for i in base..base + split.inner {
                    let h = (xv[i] - mean[c]) * inv_std[c];
                    xhat[i] = h;
                    value[i] = g[c] * h + b[c];
                }
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let out = self.push(
            shape,
            value,
            rg,
            Op::BatchNorm(Box::new(BatchNormSaved {
                x,
                gamma,
                beta,
                split,
                xhat,
                inv_std,
                batch_stats,
            })),
        );
        Ok(NormOutput { out, mean, var })
    }

    /// LSTM over `x [B x T x D]` with input kernel `w [D x 4U]`, recurrent
    /// kernel `u [U x 4U]`, bias `b [4U]`, gate order (i, f, g, o) and zero
    /// initial state. Returns `[B x T x U]` or the last step `[B x U]`.
    pub fn lstm(&mut self, x: Var, w: Var, u: Var, b: Var, return_sequences: bool) -> Result<Var> {
        let (sx, sw, su, sb) = (self.shape(x), self.shape(w), self.shape(u), self.shape(b));
        let ok = sx.len() == 3
            && sw.len() == 2
            && su.len() == 2
            && sb.len() == 1
            && sw[0] == sx[2]
            && sw[1] % 4 == 0
            && su[0] * 4 == su[1]
            && su[1] == sw[1]
            && sb[0] == sw[1];
        if !ok {
            return Err(Error::dim(
                "lstm",
                &[sx, sw, su, sb],
                "expected x [B x T x D], w [D x 4U], u [U x 4U], b [4U]",
            ));
        }
        let dims = LstmDims {
            batch: sx[0],
            steps: sx[1],
            input: sx[2],
            units: su[0],
        };
        let cache = lstm_kernel::forward(self.value(x), self.value(w), self.value(u), self.value(b), dims);
        let (shape, value) = if return_sequences {
            (vec![dims.batch, dims.steps, dims.units], cache.hidden.clone())
        } else {
            let mut last = Vec::with_capacity(dims.batch * dims.units);
            for s in 0..dims.batch {
                let row = s * dims.steps + dims.steps - 1;
                last.extend_from_slice(&cache.hidden[row * dims.units..(row + 1) * dims.units]);
            }
            (vec![dims.batch, dims.units], last)
        };
        let rg = self.rg(x) || self.rg(w) || self.rg(u) || self.rg(b);
        Ok(self.push(
            shape,
            value,
            rg,
            Op::Lstm(Box::new(LstmSaved {
                x,
                w,
                u,
                b,
                dims,
                return_sequences,
                cache,
            })),
        ))
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let node = &self.nodes[loss.0];
        if node.value.len() != 1 {
            return Err(Error::dim("backward", &[&node.shape], "loss must be a scalar"));
        }
        let mut grads = Grads {
            slots: vec![None; loss.0 + 1],
            tape: self,
        };
        if node.requires_grad {
            grads.slots[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads.slots[i].take() else {
                continue;
            };
            self.propagate(&node.op, &node.value, &g, &mut grads);
        }
        Ok(Gradients { slots: grads.slots })
    }

    fn propagate(&self, op: &Op, out: &[f64], g: &[f64], grads: &mut Grads<'_>) {
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                grads.add(*a, g);
                grads.add(*b, g);
            }
            Op::Sub(a, b) => {
                grads.add(*a, g);
                if let Some(s) = grads.slot(*b) {
                    s.iter_mut().zip(g).for_each(|(s, v)| *s -= v);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if let Some(s) = grads.slot(*a) {
                    s.iter_mut().zip(g.iter().zip(bv)).for_each(|(s, (g, b))| *s += g * b);
                }
                if let Some(s) = grads.slot(*b) {
                    s.iter_mut().zip(g.iter().zip(av)).for_each(|(s, (g, a))| *s += g * a);
                }
            }
            &Op::MatMul { a, b, m, k, n } => {
                if grads.wants(a) {
                    let bv = self.value(b);
                    let s = grads.slot(a).unwrap();
                    gemm(
                        1.0,
                        MatRef::dense(g, m, n),
                        MatRef::dense(bv, k, n).t(),
                        1.0,
                        MatMut::dense(s, m, k),
                    );
                }
                if grads.wants(b) {
                    let av = self.value(a);
                    let s = grads.slot(b).unwrap();
                    gemm(
                        1.0,
                        MatRef::dense(av, m, k).t(),
                        MatRef::dense(g, m, n),
                        1.0,
                        MatMut::dense(s, k, n),
                    );
                }
            }
            Op::AddBias { x, bias } => {
                grads.add(*x, g);
                if let Some(s) = grads.slot(*bias) {
                    let cols = s.len();
                    for row in g.chunks(cols) {
                        s.iter_mut().zip(row).for_each(|(s, v)| *s += v);
                    }
                }
            }
            Op::Sigmoid(x) => {
                if let Some(s) = grads.slot(*x) {
                    s.iter_mut()
                        .zip(g.iter().zip(out))
                        .for_each(|(s, (g, y))| *s += g * y * (1.0 - y));
                }
            }
            Op::Tanh(x) => {
                if let Some(s) = grads.slot(*x) {
                    s.iter_mut()
                        .zip(g.iter().zip(out))
                        .for_each(|(s, (g, y))| *s += g * (1.0 - y * y));
                }
            }
            Op::Exp(x) => {
                if let Some(s) = grads.slot(*x) {
                    s.iter_mut().zip(g.iter().zip(out)).for_each(|(s, (g, y))| *s += g * y);
                }
            }
            Op::Log(x) => {
                let xv = self.value(*x);
                if let Some(s) = grads.slot(*x) {
                    s.iter_mut().zip(g.iter().zip(xv)).for_each(|(s, (g, &v))| {
                        if v >= CLAMP_FLOOR {
                            *s += g / v;
                        }
                    });
                }
            }
            &Op::Scale(x, c) => {
                if let Some(s) = grads.slot(x) {
                    s.iter_mut().zip(g).for_each(|(s, g)| *s += g * c);
                }
            }
            &Op::Sum { x, split, scale } => {
                if let Some(s) = grads.slot(x) {
                    if split.inner == 1 {
                        for (chunk, &gv) in s.chunks_exact_mut(split.len).zip(g) {
                            chunk.iter_mut().for_each(|d| *d += gv * scale);
                        }
                        return;
                    }
                    for o in 0..split.outer {
                        let src = &g[o * split.inner..(o + 1) * split.inner];
                        for l in 0..split.len {
                            let base = (o * split.len + l) * split.inner;
                            s[base..base + split.inner]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(d, v)| *d += v * scale);
                        }
                    }
                }
            }
            Op::Concat { inputs, outer, widths } => {
                let row: usize = widths.iter().sum();
                let mut offset = 0;
                for (&v, &w) in inputs.iter().zip(widths) {
                    if let Some(s) = grads.slot(v) {
                        for o in 0..*outer {
                            let src = &g[o * row + offset..o * row + offset + w];
                            s[o * w..(o + 1) * w].iter_mut().zip(src).for_each(|(d, v)| *d += v);
                        }
                    }
                    offset += w;
                }
            }
            Op::Reshape(x) => grads.add(*x, g),
            &Op::Slice { x, split, start, len } => {
                if let Some(s) = grads.slot(x) {
                    let chunk = len * split.inner;
                    for o in 0..split.outer {
                        let to = (o * split.len + start) * split.inner;
                        s[to..to + chunk]
                            .iter_mut()
                            .zip(&g[o * chunk..(o + 1) * chunk])
                            .for_each(|(d, v)| *d += v);
                    }
                }
            }
            &Op::Softmax { x, cols } => {
                if let Some(s) = grads.slot(x) {
                    for ((srow, grow), yrow) in s.chunks_mut(cols).zip(g.chunks(cols)).zip(out.chunks(cols)) {
                        let dot: f64 = grow.iter().zip(yrow).map(|(g, y)| g * y).sum();
                        srow.iter_mut()
                            .zip(grow.iter().zip(yrow))
                            .for_each(|(s, (g, y))| *s += y * (g - dot));
                    }
                }
            }
            Op::CrossEntropy { probs, labels, cols } => {
                let p = self.value(*probs);
                let scale = g[0] / labels.len() as f64;
                if let Some(s) = grads.slot(*probs) {
                    for (r, &label) in labels.iter().enumerate() {
                        let v = p[r * cols + label];
                        if (CLAMP_FLOOR..=1.0).contains(&v) {
                            s[r * cols + label] -= scale / v;
                        }
                    }
                }
            }
            &Op::Conv1d { x, w, b, dims } => self.conv1d_backward(x, w, b, dims, g, grads),
            Op::BatchNorm(saved) => self.batch_norm_backward(saved, g, grads),
            Op::Lstm(saved) => {
                let LstmSaved {
                    x,
                    w,
                    u,
                    b,
                    dims,
                    return_sequences,
                    cache,
                } = saved.as_ref();
                let d = *dims;
                let dh_out = if *return_sequences {
                    g.to_vec()
                } else {
                    let mut full = vec![0.0; d.batch * d.steps * d.units];
                    for s in 0..d.batch {
                        let row = s * d.steps + d.steps - 1;
                        full[row * d.units..(row + 1) * d.units].copy_from_slice(&g[s * d.units..(s + 1) * d.units]);
                    }
                    full
                };
                let lg = lstm_kernel::backward(&dh_out, self.value(*x), self.value(*w), self.value(*u), cache, d);
                grads.add(*x, &lg.dx);
                grads.add(*w, &lg.dw);
                grads.add(*u, &lg.du);
                grads.add(*b, &lg.db);
            }
        }
    }

    fn conv1d_backward(&self, x: Var, w: Var, b: Var, d: ConvDims, g: &[f64], grads: &mut Grads<'_>) {
        let (xv, wv) = (self.value(x), self.value(w));
        if let Some(s) = grads.slot(b) {
            for n in 0..d.n {
                for co in 0..d.c_out {
                    let base = (n * d.c_out + co) * d.l_out;
                    s[co] += g[base..base + d.l_out].iter().sum::<f64>();
                }
            }
        }
        if let Some(s) = grads.slot(w) {
            for n in 0..d.n {
                for co in 0..d.c_out {
                    let gy = &g[(n * d.c_out + co) * d.l_out..(n * d.c_out + co + 1) * d.l_out];
                    for ci in 0..d.c_in {
                        let xs = &xv[(n * d.c_in + ci) * d.len..(n * d.c_in + ci + 1) * d.len];
                        for j in 0..d.k {
                            s[(co * d.c_in + ci) * d.k + j] +=
                                gy.iter().zip(&xs[j..j + d.l_out]).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                }
            }
        }
        if let Some(s) = grads.slot(x) {
            for n in 0..d.n {
                for co in 0..d.c_out {
                    let gy = &g[(n * d.c_out + co) * d.l_out..(n * d.c_out + co + 1) * d.l_out];
                    for ci in 0..d.c_in {
                        let dx = &mut s[(n * d.c_in + ci) * d.len..(n * d.c_in + ci + 1) * d.len];
                        for j in 0..d.k {
                            let wj = wv[(co * d.c_in + ci) * d.k + j];
                            dx[j..j + d.l_out].iter_mut().zip(gy).for_each(|(dx, gy)| *dx += wj * gy);
                        }
                    }
                }
            }
        }
    }

    fn batch_norm_backward(&self, saved: &BatchNormSaved, g: &[f64], grads: &mut Grads<'_>) {
        let BatchNormSaved {
            x,
            gamma,
            beta,
            split,
            xhat,
            inv_std,
            batch_stats,
        } = saved;
        let f = split.len;
        let count = (split.outer * split.inner) as f64;
        let mut sum_g = vec![0.0; f];
        let mut sum_gx = vec![0.0; f];
        for o in 0..split.outer {
            for c in 0..f {
                let base = (o * f + c) * split.inner;
                for i in base..base + split.inner {
                    sum_g[c] += g[i];
                    sum_gx[c] += g[i] * xhat[i];
                }
            }
        }
        if let Some(s) = grads.slot(*beta) {
            s.iter_mut().zip(&sum_g).for_each(|(s, v)| *s += v);
        }
        if let Some(s) = grads.slot(*gamma) {
            s.iter_mut().zip(&sum_gx).for_each(|(s, v)| *s += v);
        }
        if grads.wants(*x) {
            let gv = self.value(*gamma);
            let s = grads.slot(*x).unwrap();
            for o in 0..split.outer {
                for c in 0..f {
                    let base = (o * f + c) * split.inner;
                    let k = gv[c] * inv_std[c];
                    for i in base..base + split.inner {
                        s[i] += if *batch_stats {
                            k * (g[i] - sum_g[c] / count - xhat[i] * sum_gx[c] / count)
                        } else {
                            k * g[i]
                        };
                    }
                }
            }
        }
    }
}

struct Grads<'t> {
    slots: Vec<Option<Vec<f64>>>,
    tape: &'t Tape,
}

impl Grads<'_> {
    fn wants(&self, v: Var) -> bool {
        self.tape.nodes[v.0].requires_grad
    }

    /// Gradient buffer for `v`, zero-initialized on first touch; `None` when
    /// `v` does not require a gradient.
    fn slot(&mut self, v: Var) -> Option<&mut [f64]> {
        let node = &self.tape.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        Some(
            self.slots[v.0]
                .get_or_insert_with(|| vec![0.0; node.value.len()])
                .as_mut_slice(),
        )
    }

    fn add(&mut self, v: Var, g: &[f64]) {
        if let Some(s) = self.slot(v) {
            s.iter_mut().zip(g).for_each(|(s, v)| *s += v);
        }
    }
}

/// Leaf gradients produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    slots: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to leaf `v`, if it was reached.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.slots.get(v.0).and_then(|s| s.as_deref())
    }

    /// Adds the gradient of `v` into `target`'s gradient slot. A leaf the
    /// loss does not depend on contributes zeros.
    pub fn accumulate_into(&self, v: Var, target: &mut Tensor) -> Result<()> {
        match self.wrt(v) {
            Some(g) => target.accumulate_grad(g),
            None => target.accumulate_grad(&vec![0.0; target.len()]),
        }
    }
}
