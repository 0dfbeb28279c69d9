//! Recorded computation graph and its reverse sweep.
//!
//! Every primitive appends one node holding its forward value. Nodes are
//! appended in evaluation order, so the node list is already topologically
//! sorted and the reverse sweep is a single backwards pass over it.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Inputs to the sigmoid are clamped to this magnitude; σ is saturated there.
pub const SIGMOID_CLAMP: f64 = 40.0;

/// Keeps the RMS normalizer away from zero on all-zero rows.
pub const RMS_EPS: f64 = 1e-5;

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The primitive set the supernet is expressed in.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    /// `[w (out×in), x (in) | (n×in)] -> (out) | (n×out)`
    MatVec,
    Add,
    Mul,
    /// `[x, s]` where `s` holds one element.
    Scale,
    /// Concatenation along the last axis.
    Concat,
    /// Mean of all elements.
    Mean,
    Relu,
    Tanh,
    Sigmoid,
    /// Softmax over the last axis.
    Softmax,
    Square,
    Abs,
    /// Mean cross-entropy of `[logits (n×C)]` against class labels.
    CrossEntropy { labels: Vec<usize> },
    /// Mean squared error of `[prediction, target]`.
    Mse,
    /// Element `index` along the last axis.
    Pick { index: usize },
    /// Max over a window of `2·radius+1` neighbours along the last axis.
    WindowMax { radius: usize },
    /// `x / sqrt(mean(x²) + ε)` over the last axis; no learned scale.
    RmsNorm,
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::MatVec => "matvec",
            Primitive::Add => "add",
            Primitive::Mul => "mul",
            Primitive::Scale => "scale",
            Primitive::Concat => "concat",
            Primitive::Mean => "mean",
            Primitive::Relu => "relu",
            Primitive::Tanh => "tanh",
            Primitive::Sigmoid => "sigmoid",
            Primitive::Softmax => "softmax",
            Primitive::Square => "square",
            Primitive::Abs => "abs",
            Primitive::CrossEntropy { .. } => "cross_entropy",
            Primitive::Mse => "mse",
            Primitive::Pick { .. } => "pick",
            Primitive::WindowMax { .. } => "window_max",
            Primitive::RmsNorm => "rms_norm",
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            Primitive::MatVec | Primitive::Add | Primitive::Mul | Primitive::Scale | Primitive::Mse => {
                Some(2)
            }
            Primitive::Concat => None,
            _ => Some(1),
        }
    }
}

#[derive(Debug)]
enum NodeOp {
    Leaf,
    Apply(Primitive, Vec<Var>),
}

#[derive(Debug)]
struct Node {
    op: NodeOp,
    shape: Vec<usize>,
    value: Vec<f64>,
    requires_grad: bool,
    /// Auxiliary forward state (softmax probabilities, argmax indices).
    saved: Saved,
}

#[derive(Debug)]
enum Saved {
    None,
    Probs(Vec<f64>),
    Indices(Vec<usize>),
}

/// Gradients produced by one backward sweep, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    lens: Vec<usize>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `var`, or zeros when the loss does not depend on it.
    pub fn dense(&self, var: Var) -> Vec<f64> {
        match self.get(var) {
            Some(g) => g.to_vec(),
            None => vec![0.0; self.lens[var.0]],
        }
    }

    /// Writes the gradient of `var` into `tensor.grad`.
    pub fn write_into(&self, var: Var, tensor: &mut Tensor) -> Result<()> {
        tensor.set_grad(self.dense(var))
    }
}

/// Append-only record of one forward evaluation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Dot product with four independent accumulators so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn last_dim(shape: &[usize]) -> usize {
    *shape.last().unwrap_or(&1)
}

fn rows(shape: &[usize]) -> usize {
    shape.iter().product::<usize>() / last_dim(shape)
}

fn sigmoid(x: f64) -> f64 {
    let x = x.clamp(-SIGMOID_CLAMP, SIGMOID_CLAMP);
    1.0 / (1.0 + (-x).exp())
}

fn softmax_rows(values: &[f64], width: usize) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for (row, dst) in values.chunks(width).zip(out.chunks_mut(width)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = (v - max).exp();
            total += *d;
        }
        for d in dst.iter_mut() {
            *d /= total;
        }
    }
    out
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

    /// Records a copy of `tensor` as a leaf; it is differentiable iff the
    /// tensor requires grad.
    pub fn leaf(&mut self, tensor: &Tensor) -> Var {
        self.push_leaf(tensor.shape().to_vec(), tensor.data().to_vec(), tensor.requires_grad())
    }

    /// Records a differentiable leaf from raw parts.
    pub fn variable(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape, data)?.with_grad();
        Ok(self.leaf(&t))
    }

    /// Records a non-differentiable leaf.
    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape, data)?;
        Ok(self.leaf(&t))
    }

    fn push_leaf(&mut self, shape: Vec<usize>, value: Vec<f64>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op: NodeOp::Leaf,
            shape,
            value,
            requires_grad,
            saved: Saved::None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &[f64] {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        &self.nodes[var.0].shape
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, var: Var) -> f64 {
        self.nodes[var.0].value[0]
    }

    /// Applies `kind` to `inputs`, records the node and returns its handle.
    pub fn apply(&mut self, kind: Primitive, inputs: &[Var]) -> Result<Var> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        let name = kind.name();
        if let Some(n) = kind.arity() {
            if inputs.len() != n {
                return Err(Error::invalid(
                    name,
                    format!("expected {} inputs, got {}", n, inputs.len()),
                ));
            }
        } else if inputs.is_empty() {
            return Err(Error::invalid(name, "no inputs"));
        }
        if let Some(bad) = inputs.iter().find(|v| v.0 >= self.nodes.len()) {
            return Err(Error::invalid(name, format!("unknown input {}", bad.0)));
        }
        let (shape, value, saved) = self.forward(&kind, inputs)?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            op: NodeOp::Apply(kind, inputs.to_vec()),
            shape,
            value,
            requires_grad,
            saved,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn forward(&self, kind: &Primitive, inputs: &[Var]) -> Result<(Vec<usize>, Vec<f64>, Saved)> {
        let name = kind.name();
        let node = |i: usize| &self.nodes[inputs[i].0];
        let same_shape = |a: &Node, b: &Node| -> Result<()> {
            if a.shape != b.shape {
                return Err(Error::ShapeMismatch {
                    primitive: name,
                    left: a.shape.clone(),
                    right: b.shape.clone(),
                });
            }
            Ok(())
        };
        let unary = |f: fn(f64) -> f64| {
            let a = node(0);
            (a.shape.clone(), a.value.iter().map(|&v| f(v)).collect::<Vec<_>>(), Saved::None)
        };
        Ok(match kind {
            Primitive::MatVec => {
                let (w, x) = (node(0), node(1));
                if w.shape.len() != 2 || x.shape.len() > 2 || last_dim(&x.shape) != w.shape[1] {
                    return Err(Error::ShapeMismatch {
                        primitive: name,
                        left: w.shape.clone(),
                        right: x.shape.clone(),
                    });
                }
                let (out_dim, in_dim) = (w.shape[0], w.shape[1]);
                let n = rows(&x.shape);
                let mut value = vec![0.0; n * out_dim];
                for (xr, yr) in x.value.chunks(in_dim).zip(value.chunks_mut(out_dim)) {
                    for (y, wr) in yr.iter_mut().zip(w.value.chunks(in_dim)) {
                        *y = dot(wr, xr);
                    }
                }
                let mut shape = x.shape.clone();
                *shape.last_mut().unwrap() = out_dim;
                (shape, value, Saved::None)
            }
            Primitive::Add | Primitive::Mul => {
                let (a, b) = (node(0), node(1));
                same_shape(a, b)?;
                let value = if matches!(kind, Primitive::Add) {
                    a.value.iter().zip(&b.value).map(|(x, y)| x + y).collect()
                } else {
                    a.value.iter().zip(&b.value).map(|(x, y)| x * y).collect()
                };
                (a.shape.clone(), value, Saved::None)
            }
            Primitive::Scale => {
                let (x, s) = (node(0), node(1));
                if s.value.len() != 1 {
                    return Err(Error::ShapeMismatch {
                        primitive: name,
                        left: x.shape.clone(),
                        right: s.shape.clone(),
                    });
                }
                let k = s.value[0];
                (x.shape.clone(), x.value.iter().map(|v| v * k).collect(), Saved::None)
            }
            Primitive::Concat => {
                let first = node(0);
                let lead = &first.shape[..first.shape.len() - 1];
                let mut width = 0;
                for i in 0..inputs.len() {
                    let s = &node(i).shape;
                    if &s[..s.len() - 1] != lead {
                        return Err(Error::ShapeMismatch {
                            primitive: name,
                            left: first.shape.clone(),
                            right: s.clone(),
                        });
                    }
                    width += last_dim(s);
                }
                let n = rows(&first.shape);
                let mut value = Vec::with_capacity(n * width);
                for r in 0..n {
                    for i in 0..inputs.len() {
                        let a = node(i);
                        let w = last_dim(&a.shape);
                        value.extend_from_slice(&a.value[r * w..(r + 1) * w]);
                    }
                }
                let mut shape = first.shape.clone();
                *shape.last_mut().unwrap() = width;
                (shape, value, Saved::None)
            }
            Primitive::Mean => {
                let a = node(0);
                let total: f64 = a.value.iter().sum();
                (vec![1], vec![total / a.value.len() as f64], Saved::None)
            }
            Primitive::Relu => unary(|v| v.max(0.0)),
            Primitive::Tanh => unary(f64::tanh),
            Primitive::Sigmoid => unary(sigmoid),
            Primitive::Square => unary(|v| v * v),
            Primitive::Abs => unary(f64::abs),
            Primitive::Softmax => {
                let a = node(0);
                if a.value.is_empty() || last_dim(&a.shape) == 0 {
                    return Err(Error::invalid(name, "empty axis"));
                }
                let value = softmax_rows(&a.value, last_dim(&a.shape));
                (a.shape.clone(), value, Saved::None)
            }
            Primitive::CrossEntropy { labels } => {
                let a = node(0);
                let classes = last_dim(&a.shape);
                let n = rows(&a.shape);
                if a.shape.len() > 2 || labels.len() != n {
                    return Err(Error::ShapeMismatch {
                        primitive: name,
                        left: a.shape.clone(),
                        right: vec![labels.len()],
                    });
                }
                if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
                    return Err(Error::invalid(name, format!("label {} out of {} classes", bad, classes)));
                }
                let probs = softmax_rows(&a.value, classes);
                let mut total = 0.0;
                for (r, &label) in labels.iter().enumerate() {
                    let row = &a.value[r * classes..(r + 1) * classes];
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                    total += lse - row[label];
                }
                (vec![1], vec![total / n as f64], Saved::Probs(probs))
            }
            Primitive::Mse => {
                let (p, t) = (node(0), node(1));
                same_shape(p, t)?;
                let total: f64 = p.value.iter().zip(&t.value).map(|(a, b)| (a - b) * (a - b)).sum();
                (vec![1], vec![total / p.value.len() as f64], Saved::None)
            }
            Primitive::Pick { index } => {
                let a = node(0);
                let w = last_dim(&a.shape);
                if *index >= w {
                    return Err(Error::invalid(name, format!("index {} out of axis of length {}", index, w)));
                }
                let value: Vec<f64> = a.value.chunks(w).map(|row| row[*index]).collect();
                let shape = if a.shape.len() > 1 {
                    a.shape[..a.shape.len() - 1].to_vec()
                } else {
                    vec![1]
                };
                (shape, value, Saved::None)
            }
            Primitive::WindowMax { radius } => {
                let a = node(0);
                let w = last_dim(&a.shape);
                let mut value = vec![0.0; a.value.len()];
                let mut argmax = vec![0usize; a.value.len()];
                for (r, row) in a.value.chunks(w).enumerate() {
                    for i in 0..w {
                        let lo = i.saturating_sub(*radius);
                        let hi = (i + radius).min(w - 1);
                        let mut best = lo;
                        for j in lo + 1..=hi {
                            if row[j] > row[best] {
                                best = j;
                            }
                        }
                        value[r * w + i] = row[best];
                        argmax[r * w + i] = r * w + best;
                    }
                }
                (a.shape.clone(), value, Saved::Indices(argmax))
            }
            Primitive::RmsNorm => {
                let a = node(0);
                let w = last_dim(&a.shape);
                if w == 0 {
                    return Err(Error::invalid(name, "empty axis"));
                }
                let mut value = Vec::with_capacity(a.value.len());
                let mut scales = Vec::with_capacity(a.value.len() / w);
                for row in a.value.chunks(w) {
                    let r = (row.iter().map(|v| v * v).sum::<f64>() / w as f64 + RMS_EPS).sqrt();
                    value.extend(row.iter().map(|v| v / r));
                    scales.push(r);
                }
                (a.shape.clone(), value, Saved::Probs(scales))
            }
        })
    }

    /// Reverse sweep from a scalar `loss`. A tape can be swept once.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        let root = self.nodes.get(loss.0).ok_or_else(|| Error::invalid("backward", "unknown loss"))?;
        if root.value.len() != 1 {
            return Err(Error::NonScalarLoss(root.shape.clone()));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(upstream) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if let NodeOp::Apply(kind, inputs) = &node.op {
                self.propagate(node, kind, inputs, &upstream, &mut grads);
            }
            grads[idx] = Some(upstream);
        }
        let lens = self.nodes.iter().map(|n| n.value.len()).collect();
        for (g, n) in grads.iter_mut().zip(&self.nodes) {
            if !n.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads, lens })
    }

    fn propagate(
        &self,
        node: &Node,
        kind: &Primitive,
        inputs: &[Var],
        dy: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let needs = |i: usize| self.nodes[inputs[i].0].requires_grad;
        let input = |i: usize| &self.nodes[inputs[i].0];
        let mut accumulate = |i: usize, f: &mut dyn FnMut(&mut [f64])| {
            let var = inputs[i];
            let slot = grads[var.0].get_or_insert_with(|| vec![0.0; self.nodes[var.0].value.len()]);
            f(slot);
        };
        match kind {
            Primitive::MatVec => {
                let (w, x) = (input(0), input(1));
                let (out_dim, in_dim) = (w.shape[0], w.shape[1]);
                if needs(0) {
                    accumulate(0, &mut |gw| {
                        for (xr, dr) in x.value.chunks(in_dim).zip(dy.chunks(out_dim)) {
                            for (gwr, &d) in gw.chunks_mut(in_dim).zip(dr) {
                                if d != 0.0 {
                                    for (g, &xv) in gwr.iter_mut().zip(xr) {
                                        *g += d * xv;
                                    }
                                }
                            }
                        }
                    });
                }
                if needs(1) {
                    accumulate(1, &mut |gx| {
                        for (gxr, dr) in gx.chunks_mut(in_dim).zip(dy.chunks(out_dim)) {
                            for (wr, &d) in w.value.chunks(in_dim).zip(dr) {
                                if d != 0.0 {
                                    for (g, &wv) in gxr.iter_mut().zip(wr) {
                                        *g += d * wv;
                                    }
                                }
                            }
                        }
                    });
                }
            }
            Primitive::Add => {
                for i in 0..2 {
                    if needs(i) {
                        accumulate(i, &mut |g| g.iter_mut().zip(dy).for_each(|(g, d)| *g += d));
                    }
                }
            }
            Primitive::Mul => {
                for i in 0..2 {
                    if needs(i) {
                        let other = &input(1 - i).value;
                        accumulate(i, &mut |g| {
                            for ((g, d), o) in g.iter_mut().zip(dy).zip(other) {
                                *g += d * o;
                            }
                        });
                    }
                }
            }
            Primitive::Scale => {
                let (x, s) = (input(0), input(1));
                if needs(0) {
                    let k = s.value[0];
                    accumulate(0, &mut |g| g.iter_mut().zip(dy).for_each(|(g, d)| *g += d * k));
                }
                if needs(1) {
                    let dot: f64 = dy.iter().zip(&x.value).map(|(d, v)| d * v).sum();
                    accumulate(1, &mut |g| g[0] += dot);
                }
            }
            Primitive::Concat => {
                let width = last_dim(&node.shape);
                let mut offset = 0;
                for i in 0..inputs.len() {
                    let w = last_dim(&input(i).shape);
                    if needs(i) {
                        accumulate(i, &mut |g| {
                            for (gr, dr) in g.chunks_mut(w).zip(dy.chunks(width)) {
                                for (gv, dv) in gr.iter_mut().zip(&dr[offset..offset + w]) {
                                    *gv += dv;
                                }
                            }
                        });
                    }
                    offset += w;
                }
            }
            Primitive::Mean => {
                let k = dy[0] / input(0).value.len() as f64;
                accumulate(0, &mut |g| g.iter_mut().for_each(|g| *g += k));
            }
            Primitive::Relu => {
                let x = &input(0).value;
                accumulate(0, &mut |g| {
                    for ((g, d), v) in g.iter_mut().zip(dy).zip(x) {
                        if *v > 0.0 {
                            *g += d;
                        }
                    }
                });
            }
            Primitive::Tanh => {
                let y = &node.value;
                accumulate(0, &mut |g| {
                    for ((g, d), y) in g.iter_mut().zip(dy).zip(y) {
                        *g += d * (1.0 - y * y);
                    }
                });
            }
            Primitive::Sigmoid => {
                let y = &node.value;
                accumulate(0, &mut |g| {
                    for ((g, d), y) in g.iter_mut().zip(dy).zip(y) {
                        *g += d * y * (1.0 - y);
                    }
                });
            }
            Primitive::Square => {
                let x = &input(0).value;
                accumulate(0, &mut |g| {
                    for ((g, d), v) in g.iter_mut().zip(dy).zip(x) {
                        *g += 2.0 * d * v;
                    }
                });
            }
            Primitive::Abs => {
                let x = &input(0).value;
                accumulate(0, &mut |g| {
                    for ((g, d), v) in g.iter_mut().zip(dy).zip(x) {
                        if *v > 0.0 {
                            *g += d;
                        } else if *v < 0.0 {
                            *g -= d;
                        }
                    }
                });
            }
            Primitive::Softmax => {
                let w = last_dim(&node.shape);
                let y = &node.value;
                accumulate(0, &mut |g| {
                    for ((gr, dr), yr) in g.chunks_mut(w).zip(dy.chunks(w)).zip(y.chunks(w)) {
                        let dot: f64 = dr.iter().zip(yr).map(|(d, y)| d * y).sum();
                        for ((g, d), y) in gr.iter_mut().zip(dr).zip(yr) {
                            *g += y * (d - dot);
                        }
                    }
                });
            }
            Primitive::CrossEntropy { labels } => {
                let Saved::Probs(probs) = &node.saved else { unreachable!() };
                let classes = last_dim(&input(0).shape);
                let k = dy[0] / labels.len() as f64;
                accumulate(0, &mut |g| {
                    for (r, &label) in labels.iter().enumerate() {
                        for c in 0..classes {
                            let target = if c == label { 1.0 } else { 0.0 };
                            g[r * classes + c] += k * (probs[r * classes + c] - target);
                        }
                    }
                });
            }
            Primitive::Mse => {
                let (p, t) = (&input(0).value, &input(1).value);
                let k = 2.0 * dy[0] / p.len() as f64;
                for (i, sign) in [(0, 1.0), (1, -1.0)] {
                    if needs(i) {
                        accumulate(i, &mut |g| {
                            for ((g, a), b) in g.iter_mut().zip(p).zip(t) {
                                *g += sign * k * (a - b);
                            }
                        });
                    }
                }
            }
            Primitive::Pick { index } => {
                let w = last_dim(&input(0).shape);
                accumulate(0, &mut |g| {
                    for (gr, d) in g.chunks_mut(w).zip(dy) {
                        gr[*index] += d;
                    }
                });
            }
            Primitive::WindowMax { .. } => {
                let Saved::Indices(argmax) = &node.saved else { unreachable!() };
                accumulate(0, &mut |g| {
                    for (&src, d) in argmax.iter().zip(dy) {
                        g[src] += d;
                    }
                });
            }
            Primitive::RmsNorm => {
                let Saved::Probs(scales) = &node.saved else { unreachable!() };
                let w = last_dim(&node.shape);
                let y = &node.value;
                accumulate(0, &mut |g| {
                    for (((gr, dr), yr), r) in g.chunks_mut(w).zip(dy.chunks(w)).zip(y.chunks(w)).zip(scales) {
                        let proj = dr.iter().zip(yr).map(|(d, y)| d * y).sum::<f64>() / w as f64;
                        for ((g, d), y) in gr.iter_mut().zip(dr).zip(yr) {
                            *g += (d - y * proj) / r;
                        }
                    }
                });
            }
        }
    }

    // Convenience wrappers over `apply`.

    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        self.apply(Primitive::MatVec, &[w, x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Add, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Mul, &[a, b])
    }

    pub fn scale(&mut self, x: Var, s: Var) -> Result<Var> {
        self.apply(Primitive::Scale, &[x, s])
    }

    /// Multiplies by a constant recorded as a non-differentiable leaf.
    pub fn scale_by(&mut self, x: Var, k: f64) -> Result<Var> {
        let s = self.constant(vec![1], vec![k])?;
        self.scale(x, s)
    }

    /// Adds a constant to every element.
    pub fn shift_by(&mut self, x: Var, k: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let n = self.value(x).len();
        let c = self.constant(shape, vec![k; n])?;
        self.add(x, c)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        self.apply(Primitive::Concat, parts)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Mean, &[x])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Relu, &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Tanh, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Sigmoid, &[x])
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Softmax, &[x])
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Square, &[x])
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Abs, &[x])
    }

    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        self.apply(
            Primitive::CrossEntropy {
                labels: labels.to_vec(),
            },
            &[logits],
        )
    }

    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.apply(Primitive::Mse, &[pred, target])
    }

    pub fn pick(&mut self, x: Var, index: usize) -> Result<Var> {
        self.apply(Primitive::Pick { index }, &[x])
    }

    pub fn window_max(&mut self, x: Var, radius: usize) -> Result<Var> {
        self.apply(Primitive::WindowMax { radius }, &[x])
    }

    pub fn rms_norm(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::RmsNorm, &[x])
    }

    /// Elementwise sum of `parts`, accumulated left to right.
    pub fn sum_all(&mut self, parts: &[Var]) -> Result<Var> {
        let (&first, rest) = parts
            .split_first()
            .ok_or_else(|| Error::invalid("sum", "empty input list"))?;
        rest.iter().try_fold(first, |acc, &p| self.add(acc, p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![7], vec![0.0; 7]).unwrap();
        let y = tape.softmax(x).unwrap();
        assert!(close(tape.value(y), &[1.0 / 7.0; 7], 1e-15));
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![1], vec![0.0]).unwrap();
        let y = tape.sigmoid(x).unwrap();
        assert_eq!(tape.scalar(y), 0.5);
    }

    #[test]
    fn sigmoid_saturates_without_overflow() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![2], vec![-1e6, 1e6]).unwrap();
        let y = tape.sigmoid(x).unwrap();
        let v = tape.value(y);
        assert!(v[0] > 0.0 && v[0] < 1e-17);
        assert!((v[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identity_matvec() {
        let mut tape = Tape::new();
        let w = tape.constant(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let x = tape.constant(vec![2], vec![3.0, 4.0]).unwrap();
        let y = tape.matvec(w, x).unwrap();
        assert_eq!(tape.value(y), &[3.0, 4.0]);
    }

    #[test]
    fn shape_mismatch_names_primitive_and_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(vec![2], vec![1.0, 2.0]).unwrap();
        let b = tape.constant(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let err = tape.add(a, b).unwrap_err().to_string();
        assert!(err.contains("add") && err.contains("[2]") && err.contains("[3]"), "{err}");
        let w = tape.constant(vec![2, 2], vec![0.0; 4]).unwrap();
        let err = tape.matvec(w, b).unwrap_err().to_string();
        assert!(err.contains("matvec") && err.contains("[2, 2]") && err.contains("[3]"), "{err}");
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut tape = Tape::new();
        let x = tape.variable(vec![2], vec![1.0, 2.0]).unwrap();
        let sq = tape.square(x).unwrap();
        let m = tape.mean(sq).unwrap();
        let loss = tape.scale_by(m, 2.0).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[2.0, 4.0]);
        assert_eq!(grads.get(loss).unwrap(), &[1.0]);
    }

    #[test]
    fn unused_parameter_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.variable(vec![2], vec![1.0, 2.0]).unwrap();
        let unused = tape.variable(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let loss = tape.mean(x).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.dense(unused), vec![0.0; 3]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.variable(vec![2], vec![1.0, 2.0]).unwrap();
        assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn second_backward_rejected() {
        let mut tape = Tape::new();
        let x = tape.variable(vec![2], vec![1.0, 2.0]).unwrap();
        let loss = tape.mean(x).unwrap();
        tape.backward(loss).unwrap();
        assert!(matches!(tape.backward(loss), Err(Error::TapeConsumed)));
        assert!(matches!(tape.mean(x), Err(Error::TapeConsumed)));
    }

    #[test]
    fn softmax_on_empty_axis_rejected() {
        assert!(Tensor::new(vec![0], vec![]).is_err());
        let mut tape = Tape::new();
        assert!(tape.apply(Primitive::Softmax, &[]).is_err());
    }

    #[test]
    fn cross_entropy_matches_closed_form() {
        let mut tape = Tape::new();
        let z = tape.variable(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let loss = tape.cross_entropy(z, &[2]).unwrap();
        let lse = (1f64.exp() + 2f64.exp() + 3f64.exp()).ln();
        assert!((tape.scalar(loss) - (lse - 3.0)).abs() < 1e-14);
    }

    #[test]
    fn window_max_routes_gradient_to_winner() {
        let mut tape = Tape::new();
        let x = tape.variable(vec![4], vec![1.0, 5.0, 2.0, 0.0]).unwrap();
        let y = tape.window_max(x, 1).unwrap();
        assert_eq!(tape.value(y), &[5.0, 5.0, 5.0, 2.0]);
        let loss = tape.mean(y).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[0.0, 0.75, 0.25, 0.0]);
    }

    #[test]
    fn rms_norm_has_unit_mean_square() {
        let mut tape = Tape::new();
        let x = tape.variable(vec![2, 2], vec![3.0, 4.0, 0.0, 0.0]).unwrap();
        let y = tape.rms_norm(x).unwrap();
        let v = tape.value(y);
        let ms = (v[0] * v[0] + v[1] * v[1]) / 2.0;
        assert!((ms - 1.0).abs() < 1e-6, "{ms}");
        assert_eq!(&v[2..], &[0.0, 0.0]);
    }
}
