//! Eager tape for reverse-mode differentiation.
//!
//! Every operation computes its value immediately and appends a node; nodes
//! are stored in creation order, so a reverse sweep over the tape is a valid
//! topological order for the backward pass.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::{matmul, Tensor};
use crate::error::{Error, Result};

/// Handle to a trainable tensor in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named collection of trainable tensors.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let id = self.values.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        ParamId(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }
}

/// Per-parameter gradients produced by [`Graph::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn from_tensors(grads: Vec<Tensor>) -> Self {
        Gradients { grads }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }

    /// Adds another gradient set of the same layout into this one.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b);
        }
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn zeros_like(params: &ParamStore) -> Self {
        Gradients {
            grads: params
                .values
                .iter()
                .map(|t| Tensor::zeros(t.rows(), t.cols()))
                .collect(),
        }
    }
}

/// Node handle on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    Reshape(Var),
    Transpose(Var),
    SegmentMax(Var, Vec<usize>),
    Softmax(Var),
    LogSumExp(Var),
    Sum(Var),
    Mask(Var, Vec<f64>),
    SpanAttention {
        scores: Var,
        values: Var,
        offsets: Option<Var>,
        spans: Vec<(usize, usize)>,
        weights: Vec<f64>,
    },
}

struct Node {
    op: Op,
    value: Option<Tensor>,
}

/// A differentiable computation over parameters borrowed from a store.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, Var>,
    mode: Mode,
    rng: ChaCha8Rng,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore, mode: Mode, seed: u64) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node created after the first `len`. Vars pointing past
    /// `len` become invalid; used to bound memory of scratch inference work.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
        self.param_nodes.retain(|_, v| v.0 < len);
    }

    /// Branch choices taken by non-smooth ops: the sign of every relu output
    /// and the winning row of every max. Two evaluations with equal
    /// patterns lie on the same differentiable piece.
    pub fn activation_pattern(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (k, node) in self.nodes.iter().enumerate() {
            match &node.op {
                Op::Relu(_) => out.extend(self.value(Var(k)).data().iter().map(|&y| usize::from(y > 0.0))),
                Op::SegmentMax(_, arg) => out.extend_from_slice(arg),
                _ => {}
            }
        }
        out
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.get(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let t = self.value(v);
        (t.rows(), t.cols())
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        Var(self.nodes.len() - 1)
    }

    fn shape_err(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::Shape {
            op,
            left: self.value(a).shape().to_vec(),
            right: self.value(b).shape().to_vec(),
        }
    }

    /// Constant input; receives no gradient outside the tape.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_nodes.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.rows() {
            return Err(self.shape_err("matmul", a, b));
        }
        let out = matmul(ta, false, tb, false);
        Ok(self.push(Op::MatMul(a, b), out))
    }

    fn broadcast_ok(&self, a: Var, b: Var) -> bool {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        (br == ar || br == 1) && (bc == ac || bc == 1)
    }

    fn broadcast(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let ta = self.value(a);
        let tb = self.value(b);
        let (r, c) = (ta.rows(), ta.cols());
        let (br, bc) = (tb.rows(), tb.cols());
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            let bi = if br == 1 { 0 } else { i };
            for j in 0..c {
                let bj = if bc == 1 { 0 } else { j };
                out.push(f(ta.data()[i * c + j], tb.data()[bi * bc + bj]));
            }
        }
        Tensor::matrix(r, c, out)
    }

    /// Elementwise sum; `b` may broadcast along rows and/or columns.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if !self.broadcast_ok(a, b) {
            return Err(self.shape_err("add", a, b));
        }
        let out = self.broadcast(a, b, |x, y| x + y);
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        if !self.broadcast_ok(a, b) {
            return Err(self.shape_err("sub", a, b));
        }
        let out = self.broadcast(a, b, |x, y| x - y);
        Ok(self.push(Op::Sub(a, b), out))
    }

    /// Elementwise product; `b` may broadcast like in [`Graph::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if !self.broadcast_ok(a, b) {
            return Err(self.shape_err("mul", a, b));
        }
        let out = self.broadcast(a, b, |x, y| x * y);
        Ok(self.push(Op::Mul(a, b), out))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let t = self.value(a);
        let out = Tensor::matrix(t.rows(), t.cols(), t.data().iter().map(|x| x * k).collect());
        self.push(Op::Scale(a, k), out)
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let t = self.value(a);
        Tensor::matrix(t.rows(), t.cols(), t.data().iter().map(|&x| f(x)).collect())
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.map(a, |x| x.max(0.0));
        self.push(Op::Relu(a), out)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.map(a, sigmoid);
        self.push(Op::Sigmoid(a), out)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.map(a, f64::tanh);
        self.push(Op::Tanh(a), out)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        assert!(!parts.is_empty(), "concat of nothing");
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let rows = self.shape(parts[0]).0;
        for &p in parts {
            if self.shape(p).0 != rows {
                return Err(self.shape_err("concat_cols", parts[0], p));
            }
        }
        let total: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        Ok(self.push(Op::ConcatCols(parts.to_vec()), Tensor::matrix(rows, total, out)))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        assert!(!parts.is_empty(), "concat of nothing");
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let cols = self.shape(parts[0]).1;
        for &p in parts {
            if self.shape(p).1 != cols {
                return Err(self.shape_err("concat_rows", parts[0], p));
            }
        }
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            rows += t.rows();
            out.extend_from_slice(t.data());
        }
        Ok(self.push(Op::ConcatRows(parts.to_vec()), Tensor::matrix(rows, cols, out)))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let t = self.value(a);
        let c = t.cols();
        assert!(start + len <= t.rows(), "slice_rows out of range");
        let out = Tensor::matrix(len, c, t.data()[start * c..(start + len) * c].to_vec());
        self.push(Op::SliceRows(a, start), out)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let t = self.value(a);
        let (r, c) = (t.rows(), t.cols());
        assert!(start + len <= c, "slice_cols out of range");
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&t.data()[i * c + start..i * c + start + len]);
        }
        self.push(Op::SliceCols(a, start), Tensor::matrix(r, len, out))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let t = self.value(a);
        let c = t.cols();
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            out.extend_from_slice(t.row(i));
        }
        let out = Tensor::matrix(idx.len(), c, out);
        self.push(Op::GatherRows(a, idx.to_vec()), out)
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let t = self.value(a);
        if t.len() != rows * cols {
            return Err(Error::Shape {
                op: "reshape",
                left: t.shape().to_vec(),
                right: vec![rows, cols],
            });
        }
        let out = Tensor::matrix(rows, cols, t.data().to_vec());
        Ok(self.push(Op::Reshape(a), out))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(Op::Transpose(a), out)
    }

    /// Column-wise max over consecutive row segments of the given lengths.
    pub fn segment_max(&mut self, a: Var, lengths: &[usize]) -> Var {
        let t = self.value(a);
        let c = t.cols();
        assert_eq!(lengths.iter().sum::<usize>(), t.rows(), "segment lengths");
        let mut out = Vec::with_capacity(lengths.len() * c);
        let mut arg = Vec::with_capacity(lengths.len() * c);
        let mut start = 0;
        for &len in lengths {
            assert!(len > 0, "empty segment");
            for j in 0..c {
                let mut best = start;
                for r in start + 1..start + len {
                    if t.get(r, j) > t.get(best, j) {
                        best = r;
                    }
                }
                out.push(t.get(best, j));
                arg.push(best);
            }
            start += len;
        }
        let out = Tensor::matrix(lengths.len(), c, out);
        self.push(Op::SegmentMax(a, arg), out)
    }

    /// Softmax over every element of `a`, keeping its shape.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let probs = softmax(t.data())?;
        let out = Tensor::matrix(t.rows(), t.cols(), probs);
        Ok(self.push(Op::Softmax(a), out))
    }

    /// `log Σ exp` over every element of `a`, as a `[1,1]` tensor.
    pub fn logsumexp(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(Error::EmptySoftmax);
        }
        let out = Tensor::scalar(logsumexp(t.data()));
        Ok(self.push(Op::LogSumExp(a), out))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).data().iter().sum());
        self.push(Op::Sum(a), out)
    }

    /// Inverted dropout with per-element Bernoulli masks. Identity outside
    /// training or when `rate` is zero.
    pub fn dropout(&mut self, a: Var, rate: f64) -> Var {
        if self.mode != Mode::Train || rate <= 0.0 {
            return a;
        }
        let keep = 1.0 - rate;
        let n = self.value(a).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| {
                if self.rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let t = self.value(a);
        let out = Tensor::matrix(
            t.rows(),
            t.cols(),
            t.data().iter().zip(&mask).map(|(x, m)| x * m).collect(),
        );
        self.push(Op::Mask(a, mask), out)
    }

    /// Attention-weighted pooling of `values[T,d]` over each inclusive span,
    /// with weights given by a softmax of `scores[T,1]` restricted to the span
    /// (plus an optional per-offset bias `offsets[l,1]`). Output is `[n,d]`.
    pub fn span_attention(
        &mut self,
        scores: Var,
        values: Var,
        offsets: Option<Var>,
        spans: &[(usize, usize)],
    ) -> Result<Var> {
        let (sr, sc) = self.shape(scores);
        let (vr, d) = self.shape(values);
        if sc != 1 || sr != vr {
            return Err(self.shape_err("span_attention", scores, values));
        }
        let st = self.value(scores);
        let vt = self.value(values);
        let off = offsets.map(|o| self.value(o));
        let mut weights = Vec::new();
        let mut out = Vec::with_capacity(spans.len() * d);
        for &(s, e) in spans {
            assert!(s <= e && e < sr, "span out of range");
            let logits: Vec<f64> = (s..=e)
                .map(|t| st.data()[t] + off.map_or(0.0, |o| o.data()[t - s]))
                .collect();
            let w = softmax(&logits)?;
            let mut h = vec![0.0; d];
            for (k, t) in (s..=e).enumerate() {
                for (hj, xj) in h.iter_mut().zip(vt.row(t)) {
                    *hj += w[k] * xj;
                }
            }
            weights.extend_from_slice(&w);
            out.extend(h);
        }
        let out = Tensor::matrix(spans.len(), d, out);
        Ok(self.push(
            Op::SpanAttention {
                scores,
                values,
                offsets,
                spans: spans.to_vec(),
                weights,
            },
            out,
        ))
    }

    /// Reverse sweep from a scalar `loss`. Parameters not reached get zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(lt.rows(), lt.cols(), 1.0));
        let mut out = Gradients::zeros_like(self.params);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let y = self.value(Var(idx));
            let mut acc = |v: Var, t: Tensor| match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => out.grads[id.0].add_assign(&g),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    acc(*a, matmul(&g, false, tb, true));
                    acc(*b, matmul(ta, true, &g, false));
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                    let tb = self.value(*b);
                    let gb = reduce_broadcast(&g, tb.rows(), tb.cols(), |_, x| sign * x);
                    acc(*a, g);
                    acc(*b, gb);
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (r, c) = (ta.rows(), ta.cols());
                    let (br, bc) = (tb.rows(), tb.cols());
                    let bval = |i: usize, j: usize| {
                        tb.data()[(if br == 1 { 0 } else { i }) * bc + if bc == 1 { 0 } else { j }]
                    };
                    let mut ga = Vec::with_capacity(r * c);
                    for i in 0..r {
                        for j in 0..c {
                            ga.push(g.data()[i * c + j] * bval(i, j));
                        }
                    }
                    let gb = reduce_broadcast(&g, br, bc, |k, x| x * ta.data()[k]);
                    acc(*a, Tensor::matrix(r, c, ga));
                    acc(*b, gb);
                }
                Op::Scale(a, k) => acc(*a, map_grad(&g, |x, _| x * k, y)),
                Op::Relu(a) => acc(*a, map_grad(&g, |x, yv| if yv > 0.0 { x } else { 0.0 }, y)),
                Op::Sigmoid(a) => acc(*a, map_grad(&g, |x, yv| x * yv * (1.0 - yv), y)),
                Op::Tanh(a) => acc(*a, map_grad(&g, |x, yv| x * (1.0 - yv * yv), y)),
                Op::ConcatCols(parts) => {
                    let rows = g.rows();
                    let total = g.cols();
                    let mut off = 0;
                    for &p in parts {
                        let c = self.shape(p).1;
                        let mut gp = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            gp.extend_from_slice(&g.data()[r * total + off..r * total + off + c]);
                        }
                        acc(p, Tensor::matrix(rows, c, gp));
                        off += c;
                    }
                }
                Op::ConcatRows(parts) => {
                    let cols = g.cols();
                    let mut off = 0;
                    for &p in parts {
                        let r = self.shape(p).0;
                        acc(p, Tensor::matrix(r, cols, g.data()[off * cols..(off + r) * cols].to_vec()));
                        off += r;
                    }
                }
                Op::SliceRows(a, start) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Tensor::zeros(r, c);
                    ga.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                    acc(*a, ga);
                }
                Op::SliceCols(a, start) => {
                    let (r, c) = self.shape(*a);
                    let len = g.cols();
                    let mut ga = Tensor::zeros(r, c);
                    for i in 0..r {
                        ga.data_mut()[i * c + start..i * c + start + len]
                            .copy_from_slice(g.row(i));
                    }
                    acc(*a, ga);
                }
                Op::GatherRows(a, idx) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Tensor::zeros(r, c);
                    for (k, &i) in idx.iter().enumerate() {
                        for (dst, src) in ga.data_mut()[i * c..(i + 1) * c].iter_mut().zip(g.row(k)) {
                            *dst += src;
                        }
                    }
                    acc(*a, ga);
                }
                Op::Reshape(a) => {
                    let (r, c) = self.shape(*a);
                    acc(*a, Tensor::matrix(r, c, g.data().to_vec()));
                }
                Op::Transpose(a) => acc(*a, g.transpose()),
                Op::SegmentMax(a, arg) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Tensor::zeros(r, c);
                    for (k, &src) in arg.iter().enumerate() {
                        let j = k % c;
                        ga.data_mut()[src * c + j] += g.data()[k];
                    }
                    acc(*a, ga);
                }
                Op::Softmax(a) => {
                    let dot: f64 = g.data().iter().zip(y.data()).map(|(x, p)| x * p).sum();
                    acc(*a, map_grad(&g, |x, p| p * (x - dot), y));
                }
                Op::LogSumExp(a) => {
                    let ta = self.value(*a);
                    let gv = g.item();
                    let lse = y.item();
                    let out = ta.data().iter().map(|x| gv * (x - lse).exp()).collect();
                    acc(*a, Tensor::matrix(ta.rows(), ta.cols(), out));
                }
                Op::Sum(a) => {
                    let (r, c) = self.shape(*a);
                    acc(*a, Tensor::filled(r, c, g.item()));
                }
                Op::Mask(a, mask) => {
                    let out = g.data().iter().zip(mask).map(|(x, m)| x * m).collect();
                    acc(*a, Tensor::matrix(g.rows(), g.cols(), out));
                }
                Op::SpanAttention {
                    scores,
                    values,
                    offsets,
                    spans,
                    weights,
                } => {
                    let vt = self.value(*values);
                    let (t_len, d) = (vt.rows(), vt.cols());
                    let mut gs = Tensor::zeros(t_len, 1);
                    let mut gv = Tensor::zeros(t_len, d);
                    let mut go = offsets.map(|o| {
                        let (r, c) = self.shape(o);
                        Tensor::zeros(r, c)
                    });
                    let mut wpos = 0;
                    for (i, &(s, e)) in spans.iter().enumerate() {
                        let gh = g.row(i);
                        let w = &weights[wpos..wpos + (e - s + 1)];
                        wpos += e - s + 1;
                        let dw: Vec<f64> = (s..=e)
                            .map(|t| vt.row(t).iter().zip(gh).map(|(x, q)| x * q).sum())
                            .collect();
                        let mean: f64 = w.iter().zip(&dw).map(|(a, b)| a * b).sum();
                        for (k, t) in (s..=e).enumerate() {
                            let dl = w[k] * (dw[k] - mean);
                            gs.data_mut()[t] += dl;
                            if let Some(go) = go.as_mut() {
                                go.data_mut()[k] += dl;
                            }
                            for (dst, q) in gv.data_mut()[t * d..(t + 1) * d].iter_mut().zip(gh) {
                                *dst += w[k] * q;
                            }
                        }
                    }
                    acc(*scores, gs);
                    acc(*values, gv);
                    if let (Some(o), Some(go)) = (offsets, go) {
                        acc(*o, go);
                    }
                }
            }
        }
        Ok(out)
    }
}

fn map_grad(g: &Tensor, f: impl Fn(f64, f64) -> f64, y: &Tensor) -> Tensor {
    Tensor::matrix(
        g.rows(),
        g.cols(),
        g.data().iter().zip(y.data()).map(|(&x, &yv)| f(x, yv)).collect(),
    )
}

/// Sums `g` down to a broadcast operand of shape `[br, bc]`, applying `f`
/// to each flat index and gradient value first.
fn reduce_broadcast(g: &Tensor, br: usize, bc: usize, f: impl Fn(usize, f64) -> f64) -> Tensor {
    let (r, c) = (g.rows(), g.cols());
    let mut out = Tensor::zeros(br, bc);
    for i in 0..r {
        let bi = if br == 1 { 0 } else { i };
        for j in 0..c {
            let bj = if bc == 1 { 0 } else { j };
            let k = i * c + j;
            out.data_mut()[bi * bc + bj] += f(k, g.data()[k]);
        }
    }
    out
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-shifted softmax.
pub fn softmax(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::EmptySoftmax);
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

pub fn logsumexp(scores: &[f64]) -> f64 {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}
