//! Define-by-run reverse-mode automatic differentiation over dense arrays.
//!
//! A [`Tape`] is rebuilt for every loss evaluation. Each primitive appends a
//! node holding its forward value and whatever it needs for the backward
//! sweep; [`Var`] is a copyable handle into that node list. Because operands
//! always exist before the node that consumes them, the node list is already
//! in topological order and [`Tape::backward`] is a single reverse pass.
//!
//! Subgradient conventions:
//! - `min_reduce` routes the gradient to the first minimal element.
//! - `max_const(x, c)` passes the gradient only where `x > c`.
//! - `abs` has zero gradient at 0.

mod adam;
mod array;
pub mod real;

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

pub use adam::{Adam, AdamConfig, AdamState, NamedParam};
pub use array::{broadcast_shapes, Array};
use array::{for_each_broadcast, reduce_to_shape};
pub use real::{Dual, Real};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AutodiffError {
    #[error("{primitive}: incompatible shapes {shapes:?}")]
    Shape {
        primitive: &'static str,
        shapes: Vec<Vec<usize>>,
    },
    #[error("{primitive}: index {index} out of range for {len} rows")]
    Index {
        primitive: &'static str,
        index: usize,
        len: usize,
    },
    #[error("backward needs a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("tape was created without gradient recording")]
    NotRecording,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A fused primitive whose forward pass is computed outside the tape.
///
/// The implementor caches whatever local Jacobian information it needs and
/// maps the output adjoint to one adjoint buffer per input.
pub trait CustomOp {
    fn name(&self) -> &'static str;
    fn vjp(&self, out_grad: &[f64], input_grads: &mut [Vec<f64>]);
}

/// Parameter-free primitives addressable through [`Tape::record`].
#[derive(Clone, Debug, PartialEq)]
pub enum Primitive {
    Add,
    Sub,
    Mul,
    Div,
    MatMul,
    Sum,
    Mean,
    MinReduce,
    MaxConst(f64),
    Abs,
    Exp,
    Sqrt,
    Sigmoid,
    Softplus,
    Tanh,
    Sin,
    Cos,
    Powf(f64),
    Gather(Vec<usize>),
    ScatterAdd { index: Vec<usize>, rows: usize },
    BroadcastTo(Vec<usize>),
}

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    AddScalar(Var),
    MulScalar(Var, f64),
    MatMul(Var, Var),
    Transpose(Var),
    Sum(Var),
    Mean(Var),
    SumAxis(Var, usize),
    MinReduce(Var, usize),
    MaxConst(Var, f64),
    Abs(Var),
    Exp(Var),
    Sqrt(Var),
    Sigmoid(Var),
    Softplus(Var),
    Tanh(Var),
    Sin(Var),
    Cos(Var),
    Powf(Var, f64),
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>),
    Reshape(Var),
    BroadcastTo(Var),
    SliceCols(Var, usize, usize),
    ConcatCols(Vec<Var>),
    Custom(Box<dyn CustomOp>, Vec<Var>),
}

struct Node {
    value: Array,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Append-only record of primitive applications.
pub struct Tape {
    nodes: Vec<Node>,
    recording: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(primitive: &'static str, shapes: &[&[usize]]) -> AutodiffError {
    AutodiffError::Shape {
        primitive,
        shapes: shapes.iter().map(|s| s.to_vec()).collect(),
    }
}

fn row_len(shape: &[usize]) -> usize {
    shape.iter().skip(1).product()
}

impl Tape {
    /// A tape that records operations for differentiation.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            recording: true,
        }
    }

    /// A tape that only evaluates forward values; `backward` is rejected.
    pub fn detached() -> Self {
        Self {
            nodes: Vec::new(),
            recording: false,
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

    /// A differentiable leaf.
    pub fn param(&mut self, value: Array) -> Var {
        let rg = self.recording;
        self.push_raw(value, Op::Leaf, rg)
    }

    /// A leaf that never accumulates gradient.
    pub fn constant(&mut self, value: Array) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Array {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of `v`, or `None` if no backward sweep reached it.
    pub fn grad(&self, v: Var) -> Option<Array> {
        let n = &self.nodes[v.0];
        n.grad
            .as_ref()
            .map(|g| Array::from_parts(n.value.shape().to_vec(), g.clone()))
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push_raw(&mut self, value: Array, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Array, op: Op, inputs: &[Var]) -> Var {
        let rg = self.recording && inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let op = if self.recording { op } else { Op::Leaf };
        self.push_raw(value, op, rg)
    }

    /// Generic entry point: applies `prim` to `inputs`.
    pub fn record(&mut self, prim: Primitive, inputs: &[Var]) -> Result<Var, AutodiffError> {
        let arity = match prim {
            Primitive::Add | Primitive::Sub | Primitive::Mul | Primitive::Div | Primitive::MatMul => 2,
            _ => 1,
        };
        if inputs.len() != arity {
            return Err(AutodiffError::Shape {
                primitive: "record",
                shapes: vec![vec![arity], vec![inputs.len()]],
            });
        }
        let a = inputs[0];
        match prim {
            Primitive::Add => self.add(a, inputs[1]),
            Primitive::Sub => self.sub(a, inputs[1]),
            Primitive::Mul => self.mul(a, inputs[1]),
            Primitive::Div => self.div(a, inputs[1]),
            Primitive::MatMul => self.matmul(a, inputs[1]),
            Primitive::Sum => Ok(self.sum(a)),
            Primitive::Mean => self.mean(a),
            Primitive::MinReduce => self.min_reduce(a),
            Primitive::MaxConst(c) => Ok(self.max_const(a, c)),
            Primitive::Abs => Ok(self.abs(a)),
            Primitive::Exp => Ok(self.exp(a)),
            Primitive::Sqrt => Ok(self.sqrt(a)),
            Primitive::Sigmoid => Ok(self.sigmoid(a)),
            Primitive::Softplus => Ok(self.softplus(a)),
            Primitive::Tanh => Ok(self.tanh(a)),
            Primitive::Sin => Ok(self.sin(a)),
            Primitive::Cos => Ok(self.cos(a)),
            Primitive::Powf(p) => Ok(self.powf(a, p)),
            Primitive::Gather(idx) => self.gather_rows(a, &idx),
            Primitive::ScatterAdd { index, rows } => self.scatter_add_rows(a, &index, rows),
            Primitive::BroadcastTo(shape) => self.broadcast_to(a, &shape),
        }
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let out = broadcast_shapes(sa, sb).ok_or_else(|| shape_err(name, &[sa, sb]))?;
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut data = vec![0.0; out.iter().product()];
        for_each_broadcast(sa, sb, &out, |o, i, j| data[o] = f(da[i], db[j]));
        Ok(self.push(Array::from_parts(out, data), op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(a).map(f);
        self.push(value, op, &[a])
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, |x| -x, Op::Neg(a))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x + c, Op::AddScalar(a))
    }

    pub fn mul_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x * c, Op::MulScalar(a, c))
    }

    /// `max(x, c)` elementwise.
    pub fn max_const(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| if x > c { x } else { c }, Op::MaxConst(a, c))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, libm::fabs, Op::Abs(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, libm::exp, Op::Exp(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, libm::sqrt, Op::Sqrt(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, real::sigmoid, Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, real::softplus, Op::Softplus(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, libm::tanh, Op::Tanh(a))
    }

    pub fn sin(&mut self, a: Var) -> Var {
        self.unary(a, libm::sin, Op::Sin(a))
    }

    pub fn cos(&mut self, a: Var) -> Var {
        self.unary(a, libm::cos, Op::Cos(a))
    }

    pub fn powf(&mut self, a: Var, p: f64) -> Var {
        self.unary(a, |x| libm::pow(x, p), Op::Powf(a, p))
    }

    /// Matrix product of `[n, k]` and `[k, m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", &[sa, sb]));
        }
        let (n, k, m) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; n * m];
        matmul_into(self.value(a).data(), self.value(b).data(), &mut out, n, k, m);
        Ok(self.push(Array::from_parts(vec![n, m], out), Op::MatMul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let s = self.shape(a);
        if s.len() != 2 {
            return Err(shape_err("transpose", &[s]));
        }
        let (r, c) = (s[0], s[1]);
        let d = self.value(a).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = d[i * c + j];
            }
        }
        Ok(self.push(Array::from_parts(vec![c, r], out), Op::Transpose(a), &[a]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Array::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let v = self.value(a);
        if v.is_empty() {
            return Err(shape_err("mean", &[v.shape()]));
        }
        let m = v.data().iter().sum::<f64>() / v.len() as f64;
        Ok(self.push(Array::scalar(m), Op::Mean(a), &[a]))
    }

    /// Sums over `axis`, removing it from the shape.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var, AutodiffError> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() {
            return Err(shape_err("sum_axis", &[&s]));
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let n = s[axis];
        let d = self.value(a).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..n {
                let base = (o * n + k) * inner;
                for i in 0..inner {
                    out[o * inner + i] += d[base + i];
                }
            }
        }
        let mut shape = s.clone();
        shape.remove(axis);
        Ok(self.push(Array::from_parts(shape, out), Op::SumAxis(a, axis), &[a]))
    }

    /// Minimum over all elements; ties resolve to the first index.
    pub fn min_reduce(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let v = self.value(a);
        if v.is_empty() {
            return Err(shape_err("min_reduce", &[v.shape()]));
        }
        let (arg, m) = argmin(v.data());
        Ok(self.push(Array::scalar(m), Op::MinReduce(a, arg), &[a]))
    }

    /// Selects rows (slices along axis 0).
    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var, AutodiffError> {
        let s = self.shape(a).to_vec();
        if s.is_empty() {
            return Err(shape_err("gather", &[&s]));
        }
        let rl = row_len(&s);
        if let Some(&bad) = index.iter().find(|&&i| i >= s[0]) {
            return Err(AutodiffError::Index {
                primitive: "gather",
                index: bad,
                len: s[0],
            });
        }
        let d = self.value(a).data();
        let mut out = Vec::with_capacity(index.len() * rl);
        for &i in index {
            out.extend_from_slice(&d[i * rl..(i + 1) * rl]);
        }
        let mut shape = s.clone();
        shape[0] = index.len();
        Ok(self.push(
            Array::from_parts(shape, out),
            Op::GatherRows(a, index.to_vec()),
            &[a],
        ))
    }

    /// Adds row `k` of `a` into row `index[k]` of a zero array with `rows` rows.
    pub fn scatter_add_rows(
        &mut self,
        a: Var,
        index: &[usize],
        rows: usize,
    ) -> Result<Var, AutodiffError> {
        let s = self.shape(a).to_vec();
        if s.is_empty() || s[0] != index.len() {
            return Err(shape_err("scatter_add", &[&s, &[index.len()]]));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
            return Err(AutodiffError::Index {
                primitive: "scatter_add",
                index: bad,
                len: rows,
            });
        }
        let rl = row_len(&s);
        let d = self.value(a).data();
        let mut out = vec![0.0; rows * rl];
        for (k, &i) in index.iter().enumerate() {
            for c in 0..rl {
                out[i * rl + c] += d[k * rl + c];
            }
        }
        let mut shape = s.clone();
        shape[0] = rows;
        Ok(self.push(
            Array::from_parts(shape, out),
            Op::ScatterAddRows(a, index.to_vec()),
            &[a],
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, AutodiffError> {
        let v = self.value(a);
        if shape.iter().product::<usize>() != v.len() {
            return Err(shape_err("reshape", &[v.shape(), shape]));
        }
        let value = v.clone().reshaped(shape);
        Ok(self.push(value, Op::Reshape(a), &[a]))
    }

    pub fn broadcast_to(&mut self, a: Var, shape: &[usize]) -> Result<Var, AutodiffError> {
        let s = self.shape(a).to_vec();
        match broadcast_shapes(&s, shape) {
            Some(out) if out == shape => {}
            _ => return Err(shape_err("broadcast_to", &[&s, shape])),
        }
        let d = self.value(a).data();
        let mut out = vec![0.0; shape.iter().product()];
        for_each_broadcast(&s, &s, shape, |o, i, _| out[o] = d[i]);
        Ok(self.push(
            Array::from_parts(shape.to_vec(), out),
            Op::BroadcastTo(a),
            &[a],
        ))
    }

    /// Columns `start..end` of a rank-2 array.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, AutodiffError> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 || start >= end || end > s[1] {
            return Err(shape_err("slice_cols", &[&s, &[start, end]]));
        }
        let (r, c) = (s[0], s[1]);
        let w = end - start;
        let d = self.value(a).data();
        let mut out = Vec::with_capacity(r * w);
        for i in 0..r {
            out.extend_from_slice(&d[i * c + start..i * c + end]);
        }
        Ok(self.push(
            Array::from_parts(vec![r, w], out),
            Op::SliceCols(a, start, end),
            &[a],
        ))
    }

    /// Single column of a rank-2 array as a rank-1 array.
    pub fn column(&mut self, a: Var, j: usize) -> Result<Var, AutodiffError> {
        let c = self.slice_cols(a, j, j + 1)?;
        let r = self.shape(c)[0];
        self.reshape(c, &[r])
    }

    /// Concatenates rank-1 `[n]` or rank-2 `[n, k]` arrays column-wise.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        if parts.is_empty() {
            return Err(shape_err("concat_cols", &[]));
        }
        let rows = self.shape(parts[0])[0];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            let w = match s.len() {
                1 => 1,
                2 => s[1],
                _ => 0,
            };
            if w == 0 || s[0] != rows {
                return Err(shape_err("concat_cols", &[s, &[rows]]));
            }
            widths.push(w);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; rows * total];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(widths.iter()) {
            let d = self.value(p).data();
            for i in 0..rows {
                out[i * total + off..i * total + off + w].copy_from_slice(&d[i * w..(i + 1) * w]);
            }
            off += w;
        }
        Ok(self.push(
            Array::from_parts(vec![rows, total], out),
            Op::ConcatCols(parts.to_vec()),
            parts,
        ))
    }

    /// Records a fused primitive whose forward value was computed by the caller.
    pub fn custom(&mut self, op: Box<dyn CustomOp>, inputs: &[Var], value: Array) -> Var {
        self.push(value, Op::Custom(op, inputs.to_vec()), inputs)
    }

    /// Reverse sweep from a scalar `root`, accumulating into every reachable
    /// node's gradient.
    pub fn backward(&mut self, root: Var) -> Result<(), AutodiffError> {
        if !self.recording {
            return Err(AutodiffError::NotRecording);
        }
        let rs = self.shape(root);
        if self.value(root).len() != 1 {
            return Err(AutodiffError::NonScalarRoot(rs.to_vec()));
        }
        if !self.nodes[root.0].requires_grad {
            return Ok(());
        }
        let mut adj: Vec<Option<Vec<f64>>> = (0..=root.0).map(|_| None).collect();
        adj[root.0] = Some(vec![1.0]);
        for idx in (0..=root.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            self.propagate(idx, &g, &mut adj);
            let node = &mut self.nodes[idx];
            match &mut node.grad {
                Some(acc) => acc.iter_mut().zip(g.iter()).for_each(|(a, b)| *a += b),
                None => node.grad = Some(g),
            }
        }
        Ok(())
    }

    fn accumulate(&self, adj: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut adj[v.0] {
            Some(acc) => acc.iter_mut().zip(g.iter()).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(g),
        }
    }

    fn elementwise_back(
        &self,
        adj: &mut [Option<Vec<f64>>],
        a: Var,
        g: &[f64],
        f: impl Fn(f64, f64) -> f64,
        out: &[f64],
    ) {
        if !self.nodes[a.0].requires_grad {
            return;
        }
        let x = self.value(a).data();
        let ga = g
            .iter()
            .zip(x.iter().zip(out.iter()))
            .map(|(gi, (&xi, &yi))| gi * f(xi, yi))
            .collect();
        self.accumulate(adj, a, ga);
    }

    fn propagate(&self, idx: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = node.value.data();
        let oshape = node.value.shape();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                let ga = reduce_to_shape(g, oshape, self.shape(*a));
                self.accumulate(adj, *a, ga);
                let mut gb = reduce_to_shape(g, oshape, self.shape(*b));
                gb.iter_mut().for_each(|x| *x *= sign);
                self.accumulate(adj, *b, gb);
            }
            Op::Mul(a, b) | Op::Div(a, b) => {
                let is_div = matches!(node.op, Op::Div(..));
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (da, db) = (self.value(*a).data(), self.value(*b).data());
                let mut full_a = vec![0.0; out.len()];
                let mut full_b = vec![0.0; out.len()];
                for_each_broadcast(sa, sb, oshape, |o, i, j| {
                    if is_div {
                        full_a[o] = g[o] / db[j];
                        full_b[o] = -g[o] * da[i] / (db[j] * db[j]);
                    } else {
                        full_a[o] = g[o] * db[j];
                        full_b[o] = g[o] * da[i];
                    }
                });
                if self.nodes[a.0].requires_grad {
                    self.accumulate(adj, *a, reduce_to_shape(&full_a, oshape, sa));
                }
                if self.nodes[b.0].requires_grad {
                    self.accumulate(adj, *b, reduce_to_shape(&full_b, oshape, sb));
                }
            }
            Op::Neg(a) => self.accumulate(adj, *a, g.iter().map(|x| -x).collect()),
            Op::AddScalar(a) | Op::Reshape(a) => self.accumulate(adj, *a, g.to_vec()),
            Op::MulScalar(a, c) => self.accumulate(adj, *a, g.iter().map(|x| x * c).collect()),
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (n, k, m) = (sa[0], sa[1], sb[1]);
                let (da, db) = (self.value(*a).data(), self.value(*b).data());
                if self.nodes[a.0].requires_grad {
                    // dA = G · Bᵀ
                    let mut bt = vec![0.0; m * k];
                    for p in 0..k {
                        for j in 0..m {
                            bt[j * k + p] = db[p * m + j];
                        }
                    }
                    let mut ga = vec![0.0; n * k];
                    matmul_into(g, &bt, &mut ga, n, m, k);
                    self.accumulate(adj, *a, ga);
                }
                if self.nodes[b.0].requires_grad {
                    // dB = Aᵀ · G
                    let mut gb = vec![0.0; k * m];
                    for i in 0..n {
                        let gi = &g[i * m..(i + 1) * m];
                        for p in 0..k {
                            let aip = da[i * k + p];
                            if aip != 0.0 {
                                axpy(aip, gi, &mut gb[p * m..(p + 1) * m]);
                            }
                        }
                    }
                    self.accumulate(adj, *b, gb);
                }
            }
            Op::Transpose(a) => {
                let (r, c) = (oshape[1], oshape[0]);
                let mut ga = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        ga[i * c + j] = g[j * r + i];
                    }
                }
                self.accumulate(adj, *a, ga);
            }
            Op::Sum(a) => {
                let n = self.value(*a).len();
                self.accumulate(adj, *a, vec![g[0]; n]);
            }
            Op::Mean(a) => {
                let n = self.value(*a).len();
                self.accumulate(adj, *a, vec![g[0] / n as f64; n]);
            }
            Op::SumAxis(a, axis) => {
                let s = self.shape(*a);
                let outer: usize = s[..*axis].iter().product();
                let inner: usize = s[axis + 1..].iter().product();
                let n = s[*axis];
                let mut ga = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    for k in 0..n {
                        let base = (o * n + k) * inner;
                        ga[base..base + inner].copy_from_slice(&g[o * inner..(o + 1) * inner]);
                    }
                }
                self.accumulate(adj, *a, ga);
            }
            Op::MinReduce(a, arg) => {
                let mut ga = vec![0.0; self.value(*a).len()];
                ga[*arg] = g[0];
                self.accumulate(adj, *a, ga);
            }
            Op::MaxConst(a, c) => {
                let c = *c;
                self.elementwise_back(adj, *a, g, |x, _| if x > c { 1.0 } else { 0.0 }, out)
            }
            Op::Abs(a) => self.elementwise_back(
                adj,
                *a,
                g,
                |x, _| {
                    if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                },
                out,
            ),
            Op::Exp(a) => self.elementwise_back(adj, *a, g, |_, y| y, out),
            Op::Sqrt(a) => self.elementwise_back(adj, *a, g, |_, y| 0.5 / y, out),
            Op::Sigmoid(a) => self.elementwise_back(adj, *a, g, |_, y| y * (1.0 - y), out),
            Op::Softplus(a) => self.elementwise_back(adj, *a, g, |x, _| real::sigmoid(x), out),
            Op::Tanh(a) => self.elementwise_back(adj, *a, g, |_, y| 1.0 - y * y, out),
            Op::Sin(a) => self.elementwise_back(adj, *a, g, |x, _| libm::cos(x), out),
            Op::Cos(a) => self.elementwise_back(adj, *a, g, |x, _| -libm::sin(x), out),
            Op::Powf(a, p) => {
                let p = *p;
                self.elementwise_back(adj, *a, g, |x, _| p * libm::pow(x, p - 1.0), out)
            }
            Op::GatherRows(a, index) => {
                let s = self.shape(*a);
                let rl = row_len(s);
                let mut ga = vec![0.0; self.value(*a).len()];
                for (k, &i) in index.iter().enumerate() {
                    axpy(1.0, &g[k * rl..(k + 1) * rl], &mut ga[i * rl..(i + 1) * rl]);
                }
                self.accumulate(adj, *a, ga);
            }
            Op::ScatterAddRows(a, index) => {
                let rl = row_len(self.shape(*a));
                let mut ga = Vec::with_capacity(index.len() * rl);
                for &i in index {
                    ga.extend_from_slice(&g[i * rl..(i + 1) * rl]);
                }
                self.accumulate(adj, *a, ga);
            }
            Op::BroadcastTo(a) => {
                let ga = reduce_to_shape(g, oshape, self.shape(*a));
                self.accumulate(adj, *a, ga);
            }
            Op::SliceCols(a, start, end) => {
                let s = self.shape(*a);
                let (r, c) = (s[0], s[1]);
                let w = end - start;
                let mut ga = vec![0.0; r * c];
                for i in 0..r {
                    ga[i * c + start..i * c + end].copy_from_slice(&g[i * w..(i + 1) * w]);
                }
                self.accumulate(adj, *a, ga);
            }
            Op::ConcatCols(parts) => {
                let total = oshape[1];
                let rows = oshape[0];
                let mut off = 0;
                for &p in parts {
                    let w = self.value(p).len() / rows;
                    if self.nodes[p.0].requires_grad {
                        let mut gp = Vec::with_capacity(rows * w);
                        for i in 0..rows {
                            gp.extend_from_slice(&g[i * total + off..i * total + off + w]);
                        }
                        self.accumulate(adj, p, gp);
                    }
                    off += w;
                }
            }
            Op::Custom(op, inputs) => {
                let mut grads: Vec<Vec<f64>> =
                    inputs.iter().map(|v| vec![0.0; self.value(*v).len()]).collect();
                op.vjp(g, &mut grads);
                for (v, gv) in inputs.iter().zip(grads) {
                    self.accumulate(adj, *v, gv);
                }
            }
        }
    }
}

fn argmin(d: &[f64]) -> (usize, f64) {
    let mut best = (0, d[0]);
    for (i, &x) in d.iter().enumerate().skip(1) {
        if x < best.1 {
            best = (i, x);
        }
    }
    best
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi += alpha * xi;
    }
}

/// `out[n, m] = a[n, k] · b[k, m]`.
pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        row.iter_mut().for_each(|x| *x = 0.0);
        for p in 0..k {
            let aip = a[i * k + p];
            if aip != 0.0 {
                axpy(aip, &b[p * m..(p + 1) * m], row);
            }
        }
    }
}
