//! Define-by-run tape. Every operation appends a node holding its forward
//! value; `backward` replays the adjoint rules in reverse insertion order.

use super::{matmul_into, transpose, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Concat { parts: Vec<Var>, axis: usize },
    Softmax(Var),
    LogSoftmax(Var),
    Sum { x: Var, axis: Option<usize> },
    Mean { x: Var, axis: Option<usize> },
    Reshape(Var),
    Transpose(Var),
    SliceRows { x: Var, start: usize },
    Gather { x: Var, indices: Vec<usize> },
    Reversal { x: Var, lambda: f64 },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to requested leaves, in request order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMap {
    entries: Vec<(Var, Tensor)>,
}

impl GradientMap {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.entries.iter().find(|(k, _)| *k == v).map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, &Tensor)> {
        self.entries.iter().map(|(k, t)| (*k, t))
    }

    pub fn into_tensors(self) -> Vec<Tensor> {
        self.entries.into_iter().map(|(_, t)| t).collect()
    }
}

fn dim_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Dimension {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

/// Splits a shape around `axis` into (outer, len, inner) extents.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn last_axis(t: &Tensor) -> (usize, usize) {
    let n = *t.shape().last().expect("non-empty shape");
    (t.len() / n, n)
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// A differentiable input.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Constant,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op, value: Tensor, inputs: &[Var]) -> Var {
        #[cfg(debug_assertions)]
        if inputs.iter().all(|v| self.nodes[v.0].value.is_finite()) {
            debug_assert!(value.is_finite(), "non-finite output from {op:?}");
        }
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(dim_err("matmul", ta, tb));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![0.0; m * n];
        matmul_into(ta.data(), tb.data(), &mut out, m, k, n);
        Ok(self.push(Op::MatMul(a, b), Tensor::from_parts(vec![m, n], out), &[a, b]))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(dim_err(name, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::from_parts(ta.shape().to_vec(), data);
        Ok(self.push(op, out, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x).map(|v| v * s);
        self.push(Op::Scale(x, s), out, &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::tanh);
        self.push(Op::Tanh(x), out, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        self.push(Op::Sigmoid(x), out, &[x])
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::exp);
        self.push(Op::Exp(x), out, &[x])
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .value(*parts.first().ok_or_else(|| Error::Argument("concat of nothing".into()))?)
            .clone();
        let rank = first.shape().len();
        if axis >= rank {
            return Err(Error::Argument(format!("concat axis {axis} out of rank {rank}")));
        }
        let mut total = 0;
        for &p in parts {
            let t = self.value(p);
            let compatible = t.shape().len() == rank
                && t.shape().iter().enumerate().all(|(d, &e)| d == axis || e == first.shape()[d]);
            if !compatible {
                return Err(dim_err("concat", &first, t));
            }
            total += t.shape()[axis];
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &p in parts {
                let t = self.value(p);
                let chunk = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let op = Op::Concat {
            parts: parts.to_vec(),
            axis,
        };
        Ok(self.push(op, Tensor::from_parts(shape, data), parts))
    }

    /// Softmax along the last axis, with max-subtraction.
    pub fn softmax(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (rows, n) = last_axis(t);
        let mut data = t.data().to_vec();
        for r in 0..rows {
            softmax_in_place(&mut data[r * n..(r + 1) * n]);
        }
        let out = Tensor::from_parts(t.shape().to_vec(), data);
        self.push(Op::Softmax(x), out, &[x])
    }

    /// Log-softmax along the last axis.
    pub fn log_softmax(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (rows, n) = last_axis(t);
        let mut data = t.data().to_vec();
        for r in 0..rows {
            let row = &mut data[r * n..(r + 1) * n];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let out = Tensor::from_parts(t.shape().to_vec(), data);
        self.push(Op::LogSoftmax(x), out, &[x])
    }

    fn reduce(&mut self, x: Var, axis: Option<usize>, mean: bool) -> Result<Var> {
        let t = self.value(x);
        let out = match axis {
            None => {
                let s = t.sum();
                Tensor::scalar(if mean { s / t.len() as f64 } else { s })
            }
            Some(ax) => {
                if ax >= t.shape().len() {
                    return Err(Error::Argument(format!(
                        "reduce axis {ax} out of rank {}",
                        t.shape().len()
                    )));
                }
                let (outer, len, inner) = split_axis(t.shape(), ax);
                let mut data = vec![0.0; outer * inner];
                for o in 0..outer {
                    for l in 0..len {
                        let src = &t.data()[(o * len + l) * inner..(o * len + l + 1) * inner];
                        for (d, s) in data[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
                if mean {
                    data.iter_mut().for_each(|v| *v /= len as f64);
                }
                let mut shape = t.shape().to_vec();
                shape.remove(ax);
                if shape.is_empty() {
                    shape.push(1);
                }
                Tensor::from_parts(shape, data)
            }
        };
        let op = if mean {
            Op::Mean { x, axis }
        } else {
            Op::Sum { x, axis }
        };
        Ok(self.push(op, out, &[x]))
    }

    pub fn sum(&mut self, x: Var, axis: Option<usize>) -> Result<Var> {
        self.reduce(x, axis, false)
    }

    pub fn mean(&mut self, x: Var, axis: Option<usize>) -> Result<Var> {
        self.reduce(x, axis, true)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshaped(shape)?;
        Ok(self.push(Op::Reshape(x), out, &[x]))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.shape().len() != 2 {
            return Err(Error::Argument(format!("transpose needs rank 2, got {:?}", t.shape())));
        }
        let (r, c) = (t.shape()[0], t.shape()[1]);
        let out = Tensor::from_parts(vec![c, r], transpose(t.data(), r, c));
        Ok(self.push(Op::Transpose(x), out, &[x]))
    }

    /// Rows `start..end` of a 2-D tensor.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(x);
        if t.shape().len() != 2 || start >= end || end > t.shape()[0] {
            return Err(Error::Argument(format!(
                "row slice {start}..{end} invalid for shape {:?}",
                t.shape()
            )));
        }
        let c = t.shape()[1];
        let out = Tensor::from_parts(vec![end - start, c], t.data()[start * c..end * c].to_vec());
        Ok(self.push(Op::SliceRows { x, start }, out, &[x]))
    }

    /// Picks flat elements into a 1-D tensor.
    pub fn gather(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(x);
        if indices.is_empty() || indices.iter().any(|&i| i >= t.len()) {
            return Err(Error::Argument(format!(
                "gather indices {indices:?} invalid for {} elements",
                t.len()
            )));
        }
        let out = Tensor::vector(indices.iter().map(|&i| t.data()[i]).collect());
        let op = Op::Gather {
            x,
            indices: indices.to_vec(),
        };
        Ok(self.push(op, out, &[x]))
    }

    /// Identity forward; the backward pass scales the incoming gradient by
    /// `-lambda`.
    pub fn gradient_reversal(&mut self, x: Var, lambda: f64) -> Result<Var> {
        if !lambda.is_finite() {
            return Err(Error::Argument(format!("reversal coefficient {lambda} not finite")));
        }
        let out = self.value(x).clone();
        Ok(self.push(Op::Reversal { x, lambda }, out, &[x]))
    }

    /// Reverse sweep from a scalar `loss`. Leaves that the loss does not
    /// depend on get zero gradients.
    pub fn backward(&self, loss: Var, leaves: &[Var]) -> Result<GradientMap> {
        if self.value(loss).len() != 1 {
            return Err(Error::Argument(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        for &l in leaves {
            if !matches!(self.nodes[l.0].op, Op::Leaf) {
                return Err(Error::Argument(format!("node {} is not a leaf", l.0)));
            }
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf | Op::Constant) || !node.needs_grad {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            self.propagate(node, &g, &mut adj);
        }
        let mut entries: Vec<(Var, Tensor)> = Vec::with_capacity(leaves.len());
        for &l in leaves {
            if entries.iter().any(|(k, _)| *k == l) {
                continue;
            }
            let shape = self.shape(l).to_vec();
            let grad = match adj.get(l.0).and_then(Option::as_ref) {
                Some(g) => Tensor::from_parts(shape, g.clone()),
                None => Tensor::zeros(&shape),
            };
            entries.push((l, grad));
        }
        Ok(GradientMap { entries })
    }

    fn propagate(&self, node: &Node, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let out = node.value.data();
        let mut acc = |v: Var, f: &dyn Fn(&mut [f64])| {
            if v.0 < adj.len() && self.nodes[v.0].needs_grad {
                let buf = adj[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
                f(buf);
            }
        };
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                acc(*a, &|buf| {
                    // dA = G * B^T
                    for i in 0..m {
                        for p in 0..k {
                            let brow = &tb.data()[p * n..(p + 1) * n];
                            let grow = &g[i * n..(i + 1) * n];
                            buf[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                });
                acc(*b, &|buf| {
                    // dB = A^T * G
                    let at = transpose(ta.data(), m, k);
                    matmul_into(&at, g, buf, k, m, n);
                });
            }
            Op::Add(a, b) => {
                acc(*a, &|buf| add_into(buf, g));
                acc(*b, &|buf| add_into(buf, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &|buf| add_into(buf, g));
                acc(*b, &|buf| buf.iter_mut().zip(g).for_each(|(d, s)| *d -= s));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, &|buf| {
                    for ((d, s), y) in buf.iter_mut().zip(g).zip(vb) {
                        *d += s * y;
                    }
                });
                acc(*b, &|buf| {
                    for ((d, s), x) in buf.iter_mut().zip(g).zip(va) {
                        *d += s * x;
                    }
                });
            }
            Op::Scale(x, s) => acc(*x, &|buf| buf.iter_mut().zip(g).for_each(|(d, v)| *d += s * v)),
            Op::Tanh(x) => acc(*x, &|buf| {
                for ((d, s), y) in buf.iter_mut().zip(g).zip(out) {
                    *d += s * (1.0 - y * y);
                }
            }),
            Op::Sigmoid(x) => acc(*x, &|buf| {
                for ((d, s), y) in buf.iter_mut().zip(g).zip(out) {
                    *d += s * y * (1.0 - y);
                }
            }),
            Op::Exp(x) => acc(*x, &|buf| {
                for ((d, s), y) in buf.iter_mut().zip(g).zip(out) {
                    *d += s * y;
                }
            }),
            Op::Concat { parts, axis } => {
                let (outer, _, inner) = split_axis(node.value.shape(), *axis);
                let total = node.value.shape()[*axis] * inner;
                let mut offset = 0;
                for &p in parts {
                    let chunk = self.value(p).shape()[*axis] * inner;
                    acc(p, &|buf| {
                        for o in 0..outer {
                            let src = &g[o * total + offset..o * total + offset + chunk];
                            add_into(&mut buf[o * chunk..(o + 1) * chunk], src);
                        }
                    });
                    offset += chunk;
                }
            }
            Op::Softmax(x) => {
                let (rows, n) = last_axis(&node.value);
                acc(*x, &|buf| {
                    for r in 0..rows {
                        let (y, gr) = (&out[r * n..(r + 1) * n], &g[r * n..(r + 1) * n]);
                        let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            buf[r * n + j] += y[j] * (gr[j] - dot);
                        }
                    }
                });
            }
            Op::LogSoftmax(x) => {
                let (rows, n) = last_axis(&node.value);
                acc(*x, &|buf| {
                    for r in 0..rows {
                        let (y, gr) = (&out[r * n..(r + 1) * n], &g[r * n..(r + 1) * n]);
                        let gsum: f64 = gr.iter().sum();
                        for j in 0..n {
                            buf[r * n + j] += gr[j] - y[j].exp() * gsum;
                        }
                    }
                });
            }
            Op::Sum { x, axis } | Op::Mean { x, axis } => {
                let is_mean = matches!(node.op, Op::Mean { .. });
                let shape = self.shape(*x);
                match axis {
                    None => {
                        let s = if is_mean { g[0] / shape.iter().product::<usize>() as f64 } else { g[0] };
                        acc(*x, &|buf| buf.iter_mut().for_each(|d| *d += s));
                    }
                    Some(ax) => {
                        let (outer, len, inner) = split_axis(shape, *ax);
                        let div = if is_mean { len as f64 } else { 1.0 };
                        acc(*x, &|buf| {
                            for o in 0..outer {
                                for l in 0..len {
                                    let base = (o * len + l) * inner;
                                    for j in 0..inner {
                                        buf[base + j] += g[o * inner + j] / div;
                                    }
                                }
                            }
                        });
                    }
                }
            }
            Op::Reshape(x) => acc(*x, &|buf| add_into(buf, g)),
            Op::Transpose(x) => {
                let (r, c) = (node.value.shape()[0], node.value.shape()[1]);
                let gt = transpose(g, r, c);
                acc(*x, &|buf| add_into(buf, &gt));
            }
            Op::SliceRows { x, start } => {
                let c = node.value.shape()[1];
                acc(*x, &|buf| add_into(&mut buf[start * c..start * c + g.len()], g));
            }
            Op::Gather { x, indices } => acc(*x, &|buf| {
                for (&i, s) in indices.iter().zip(g) {
                    buf[i] += s;
                }
            }),
            Op::Reversal { x, lambda } => {
                acc(*x, &|buf| buf.iter_mut().zip(g).for_each(|(d, s)| *d += -lambda * s))
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}

/// Softmax of a plain slice.
pub fn softmax(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Argument("softmax of an empty vector".into()));
    }
    let mut out = values.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}
