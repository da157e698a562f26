//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every op appends a node holding its forward value, so node ids are a
//! topological order by construction and [`Graph::backward`] is a single
//! reverse sweep.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::tensor::{matmul_a_bt, matmul_at_b, matmul_raw, Tensor};
use crate::error::{invalid, Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    Sum(Var),
    Mean(Var),
    Sigmoid(Var),
    Log(Var),
    Exp(Var),
    Tanh(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Clip(Var, f64, f64),
    Minimum(Var, Var),
    GatherRows(Var, Vec<usize>),
    GatherPerRow(Var, Vec<usize>),
    Concat(Vec<Var>),
    MeanPool(Var, Vec<(usize, usize)>),
    Reshape(Var),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

#[derive(Debug, Clone)]
struct ParamLeaf {
    name: String,
    var: Var,
    trainable: bool,
}

/// Gradients of a scalar loss, keyed by parameter name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    grads: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.grads.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.grads.iter()
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn insert(&mut self, name: String, grad: Tensor) {
        self.grads.insert(name, grad);
    }

    /// Adds `other` into `self`, entry by entry.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (name, g) in &other.grads {
            match self.grads.get_mut(name) {
                Some(mine) => mine.add_assign(g),
                None => {
                    self.grads.insert(name.clone(), g.clone());
                }
            }
        }
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<ParamLeaf>,
    consumed: bool,
}

fn check_finite(op: &'static str, t: &Tensor) -> Result<()> {
    if t.all_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        })
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn softmax_rows(t: &Tensor) -> Tensor {
    let (rows, cols) = t.as_2d();
    let mut out = t.clone();
    for r in 0..rows {
        let row = &mut out.data_mut()[r * cols..(r + 1) * cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = libm::exp(*v - max);
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

fn log_softmax_rows(t: &Tensor) -> Tensor {
    let (rows, cols) = t.as_2d();
    let mut out = t.clone();
    for r in 0..rows {
        let row = &mut out.data_mut()[r * cols..(r + 1) * cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = row.iter().map(|v| libm::exp(v - max)).sum();
        let lse = max + libm::log(total);
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t, false)
    }

    /// A named parameter leaf. Frozen leaves report zero gradients.
    pub fn param(&mut self, name: &str, t: Tensor, trainable: bool) -> Var {
        let var = self.push(Op::Leaf, t, trainable);
        self.params.push(ParamLeaf {
            name: name.into(),
            var,
            trainable,
        });
        var
    }

    fn unary(&mut self, op: Op, a: Var, name: &'static str, value: Tensor) -> Result<Var> {
        check_finite(name, &value)?;
        let ng = self.needs(a);
        Ok(self.push(op, value, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("add", x, y)?;
        let value = x.zip(y, |p, q| p + q);
        check_finite("add", &value)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Add(a, b), value, ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("sub", x, y)?;
        let value = x.zip(y, |p, q| p - q);
        check_finite("sub", &value)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Sub(a, b), value, ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("mul", x, y)?;
        let value = x.zip(y, |p, q| p * q);
        check_finite("mul", &value)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Mul(a, b), value, ng))
    }

    /// Adds a row vector `b` (length = columns of `a`) to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let (rows, cols) = x.as_2d();
        if y.len() != cols {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                left: x.shape().to_vec(),
                right: y.shape().to_vec(),
            });
        }
        let mut value = x.clone();
        for r in 0..rows {
            for (v, &bv) in value.data_mut()[r * cols..(r + 1) * cols]
                .iter_mut()
                .zip(y.data())
            {
                *v += bv;
            }
        }
        check_finite("add_row", &value)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::AddRow(a, b), value, ng))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = self.value(a).map(|v| v * c);
        self.unary(Op::Scale(a, c), a, "scale", value)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = self.value(a).map(|v| v + c);
        self.unary(Op::AddScalar(a), a, "add_scalar", value)
    }

    /// `a [n×k] · b [k×m]`. Vectors are treated as a single row.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let (n, k) = x.as_2d();
        if y.shape().len() != 2 || y.shape()[0] != k || x.shape().len() > 2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: x.shape().to_vec(),
                right: y.shape().to_vec(),
            });
        }
        let m = y.shape()[1];
        let value = Tensor::matrix(n, m, matmul_raw(x.data(), y.data(), n, k, m))?;
        check_finite("matmul", &value)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::MatMul(a, b), value, ng))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        self.unary(Op::Sum(a), a, "sum", value)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let value = Tensor::scalar(x.data().iter().sum::<f64>() / x.len() as f64);
        self.unary(Op::Mean(a), a, "mean", value)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(sigmoid);
        self.unary(Op::Sigmoid(a), a, "sigmoid", value)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(libm::log);
        self.unary(Op::Log(a), a, "log", value)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(libm::exp);
        self.unary(Op::Exp(a), a, "exp", value)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(libm::tanh);
        self.unary(Op::Tanh(a), a, "tanh", value)
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let value = softmax_rows(self.value(a));
        self.unary(Op::Softmax(a), a, "softmax", value)
    }

    /// Log-softmax over the last axis, computed with the max-shift.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let value = log_softmax_rows(self.value(a));
        self.unary(Op::LogSoftmax(a), a, "log_softmax", value)
    }

    /// Clamps into `[lo, hi]`. The subgradient is 1 on the closed interval.
    pub fn clip(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        if !(lo < hi) {
            return Err(invalid("clip requires lo < hi"));
        }
        let value = self.value(a).map(|v| v.clamp(lo, hi));
        self.unary(Op::Clip(a, lo, hi), a, "clip", value)
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("minimum", x, y)?;
        let value = x.zip(y, |p, q| if p <= q { p } else { q });
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Minimum(a, b), value, ng))
    }

    /// Selects rows of a matrix (embedding lookup).
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let x = self.value(a);
        let (rows, cols) = x.as_2d();
        if indices.is_empty() {
            return Err(Error::EmptyInput("gather_rows"));
        }
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            if i >= rows {
                return Err(Error::IndexOutOfRange {
                    op: "gather_rows",
                    index: i,
                    extent: rows,
                });
            }
            data.extend_from_slice(x.row(i));
        }
        let value = Tensor::matrix(indices.len(), cols, data)?;
        let ng = self.needs(a);
        Ok(self.push(Op::GatherRows(a, indices.to_vec()), value, ng))
    }

    /// Picks column `indices[r]` from each row `r`, yielding a vector.
    pub fn gather(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let x = self.value(a);
        let (rows, cols) = x.as_2d();
        if indices.len() != rows {
            return Err(Error::LengthMismatch {
                what: "gather indices",
                left: indices.len(),
                right: rows,
            });
        }
        let mut data = Vec::with_capacity(rows);
        for (r, &c) in indices.iter().enumerate() {
            if c >= cols {
                return Err(Error::IndexOutOfRange {
                    op: "gather",
                    index: c,
                    extent: cols,
                });
            }
            data.push(x.data()[r * cols + c]);
        }
        let value = Tensor::vector(data)?;
        let ng = self.needs(a);
        Ok(self.push(Op::GatherPerRow(a, indices.to_vec()), value, ng))
    }

    /// Concatenates along the first axis. Vectors concatenate end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(Error::EmptyInput("concat"))?;
        let head = self.value(*first);
        let tail: Vec<usize> = head.shape()[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.shape()[1..] != tail[..] {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    left: head.shape().to_vec(),
                    right: t.shape().to_vec(),
                });
            }
            lead += t.shape()[0];
            data.extend_from_slice(t.data());
        }
        let mut shape = vec![lead];
        shape.extend(tail);
        let value = Tensor::new(shape, data)?;
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Op::Concat(parts.to_vec()), value, ng))
    }

    /// Output row `i` is the mean of input rows `ranges[i].0..ranges[i].1`.
    pub fn mean_pool(&mut self, a: Var, ranges: &[(usize, usize)]) -> Result<Var> {
        let x = self.value(a);
        let (rows, cols) = x.as_2d();
        if ranges.is_empty() {
            return Err(Error::EmptyInput("mean_pool"));
        }
        let mut data = vec![0.0; ranges.len() * cols];
        for (i, &(s, e)) in ranges.iter().enumerate() {
            if s >= e || e > rows {
                return Err(Error::IndexOutOfRange {
                    op: "mean_pool",
                    index: e,
                    extent: rows,
                });
            }
            let out = &mut data[i * cols..(i + 1) * cols];
            for r in s..e {
                for (o, &v) in out.iter_mut().zip(x.row(r)) {
                    *o += v;
                }
            }
            let n = (e - s) as f64;
            for o in out.iter_mut() {
                *o /= n;
            }
        }
        let value = Tensor::matrix(ranges.len(), cols, data)?;
        let ng = self.needs(a);
        Ok(self.push(Op::MeanPool(a, ranges.to_vec()), value, ng))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(a).reshape(shape)?;
        let ng = self.needs(a);
        Ok(self.push(Op::Reshape(a), value, ng))
    }

    /// Reverse sweep from a scalar loss. Consumes the graph's tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::GraphConsumed);
        }
        let shape = self.value(loss).shape().to_vec();
        if !self.value(loss).is_scalar() {
            return Err(Error::NotScalar { shape });
        }
        self.consumed = true;

        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::filled(&shape, 1.0));

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].needs_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            let mut send = |v: Var, t: Tensor| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            };
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                }
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g);
                }
                Op::Sub(a, b) => {
                    send(*b, g.map(|v| -v));
                    send(*a, g);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let ga = g.zip(y, |p, q| p * q);
                    let gb = g.zip(x, |p, q| p * q);
                    send(*a, ga);
                    send(*b, gb);
                }
                Op::AddRow(a, b) => {
                    let bt = &self.nodes[b.0].value;
                    let (rows, cols) = g.as_2d();
                    let mut gb = Tensor::zeros(bt.shape());
                    for r in 0..rows {
                        for (o, &v) in gb.data_mut().iter_mut().zip(&g.data()[r * cols..(r + 1) * cols]) {
                            *o += v;
                        }
                    }
                    send(*b, gb);
                    send(*a, g);
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    send(*a, g.map(|v| v * c));
                }
                Op::AddScalar(a) => send(*a, g),
                Op::MatMul(a, b) => {
                    let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let (n, k) = x.as_2d();
                    let m = y.shape()[1];
                    if self.nodes[a.0].needs_grad {
                        let ga = matmul_a_bt(g.data(), y.data(), n, m, k);
                        send(*a, Tensor::new(x.shape().to_vec(), ga)?);
                    }
                    if self.nodes[b.0].needs_grad {
                        let gb = matmul_at_b(x.data(), g.data(), n, k, m);
                        send(*b, Tensor::new(y.shape().to_vec(), gb)?);
                    }
                }
                Op::Sum(a) => {
                    let s = g.item();
                    send(*a, Tensor::filled(self.nodes[a.0].value.shape(), s));
                }
                Op::Mean(a) => {
                    let x = &self.nodes[a.0].value;
                    let s = g.item() / x.len() as f64;
                    send(*a, Tensor::filled(x.shape(), s));
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    send(*a, g.zip(y, |gv, s| gv * s * (1.0 - s)));
                }
                Op::Log(a) => {
                    let x = &self.nodes[a.0].value;
                    send(*a, g.zip(x, |gv, xv| gv / xv));
                }
                Op::Exp(a) => {
                    let y = &node.value;
                    send(*a, g.zip(y, |gv, e| gv * e));
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    send(*a, g.zip(y, |gv, t| gv * (1.0 - t * t)));
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let (rows, cols) = y.as_2d();
                    let mut ga = g.clone();
                    for r in 0..rows {
                        let yr = &y.data()[r * cols..(r + 1) * cols];
                        let gr = &g.data()[r * cols..(r + 1) * cols];
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for (c, o) in ga.data_mut()[r * cols..(r + 1) * cols].iter_mut().enumerate() {
                            *o = yr[c] * (gr[c] - dot);
                        }
                    }
                    send(*a, ga);
                }
                Op::LogSoftmax(a) => {
                    let y = &node.value;
                    let (rows, cols) = y.as_2d();
                    let mut ga = g.clone();
                    for r in 0..rows {
                        let yr = &y.data()[r * cols..(r + 1) * cols];
                        let gr = &g.data()[r * cols..(r + 1) * cols];
                        let total: f64 = gr.iter().sum();
                        for (c, o) in ga.data_mut()[r * cols..(r + 1) * cols].iter_mut().enumerate() {
                            *o = gr[c] - libm::exp(yr[c]) * total;
                        }
                    }
                    send(*a, ga);
                }
                Op::Clip(a, lo, hi) => {
                    let (lo, hi) = (*lo, *hi);
                    let x = &self.nodes[a.0].value;
                    send(
                        *a,
                        g.zip(x, |gv, xv| if xv >= lo && xv <= hi { gv } else { 0.0 }),
                    );
                }
                Op::Minimum(a, b) => {
                    let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let mut ga = g.clone();
                    let mut gb = g.clone();
                    for i in 0..g.len() {
                        if x.data()[i] <= y.data()[i] {
                            gb.data_mut()[i] = 0.0;
                        } else {
                            ga.data_mut()[i] = 0.0;
                        }
                    }
                    send(*a, ga);
                    send(*b, gb);
                }
                Op::GatherRows(a, idx) => {
                    let x = &self.nodes[a.0].value;
                    let (_, cols) = x.as_2d();
                    let mut ga = Tensor::zeros(x.shape());
                    for (r, &i) in idx.iter().enumerate() {
                        for (o, &v) in ga.data_mut()[i * cols..(i + 1) * cols]
                            .iter_mut()
                            .zip(&g.data()[r * cols..(r + 1) * cols])
                        {
                            *o += v;
                        }
                    }
                    send(*a, ga);
                }
                Op::GatherPerRow(a, idx) => {
                    let x = &self.nodes[a.0].value;
                    let (_, cols) = x.as_2d();
                    let mut ga = Tensor::zeros(x.shape());
                    for (r, &c) in idx.iter().enumerate() {
                        ga.data_mut()[r * cols + c] += g.data()[r];
                    }
                    send(*a, ga);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let shape = self.nodes[p.0].value.shape().to_vec();
                        let n = self.nodes[p.0].value.len();
                        let piece = Tensor::new(shape, g.data()[offset..offset + n].to_vec())?;
                        offset += n;
                        send(p, piece);
                    }
                }
                Op::MeanPool(a, ranges) => {
                    let x = &self.nodes[a.0].value;
                    let (_, cols) = x.as_2d();
                    let mut ga = Tensor::zeros(x.shape());
                    for (i, &(s, e)) in ranges.iter().enumerate() {
                        let n = (e - s) as f64;
                        let gr = &g.data()[i * cols..(i + 1) * cols];
                        for r in s..e {
                            for (o, &v) in ga.data_mut()[r * cols..(r + 1) * cols].iter_mut().zip(gr) {
                                *o += v / n;
                            }
                        }
                    }
                    send(*a, ga);
                }
                Op::Reshape(a) => {
                    let shape = self.nodes[a.0].value.shape().to_vec();
                    send(*a, g.reshape(shape)?);
                }
            }
        }

        let mut out = Gradients::default();
        for p in &self.params {
            let shape = self.nodes[p.var.0].value.shape();
            let grad = if p.trainable {
                grads
                    .get_mut(p.var.0)
                    .and_then(Option::take)
                    .unwrap_or_else(|| Tensor::zeros(shape))
            } else {
                Tensor::zeros(shape)
            };
            // a tensor bound more than once gets the sum of its leaves
            match out.grads.get_mut(&p.name) {
                Some(prev) => prev.add_assign(&grad),
                None => out.insert(p.name.clone(), grad),
            }
        }
        Ok(out)
    }
}
