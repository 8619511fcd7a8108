use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kernels::{self, ConvDims, GatCache, GatDims};
use super::{SparseAdj, Tensor};
use crate::error::{shape_err, Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatVec(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    ScaleRows(Var, Var),
    ConcatCols(Vec<Var>),
    Dropout(Var, Vec<f64>),
    SoftmaxRows(Var),
    Log(Var),
    Sum(Var),
    PermuteRows(Var, Arc<[usize]>),
    Conv1d {
        seq: Var,
        kernel: Var,
        bias: Var,
        dims: ConvDims,
    },
    SpMM(Arc<SparseAdj>, Var),
    Gat {
        adj: Arc<SparseAdj>,
        h: Var,
        att_src: Var,
        att_dst: Var,
        dims: GatDims,
        cache: GatCache,
    },
    FullAttention(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<(usize, usize)>,
        probs: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records one forward pass. Nodes are appended in evaluation order, so the
/// node list is always topologically sorted.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss, keyed by the [`Var`]s of the consumed tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of `shape` when nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
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

    /// A differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(value, op, rg)
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn matrix_dims(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        match *self.shape(v) {
            [r, c] => Ok((r, c)),
            ref s => shape_err(op, s, &[0, 0]),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims(a, "matmul")?;
        let (k2, p) = self.matrix_dims(b, "matmul")?;
        if k != k2 {
            return shape_err("matmul", self.shape(a), self.shape(b));
        }
        let data = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, p);
        let value = Tensor::matrix(m, p, data)?;
        Ok(self.push_op(value, Op::MatMul(a, b), &[a, b]))
    }

    /// `[n×f] · [f] -> [n]`
    pub fn matvec(&mut self, a: Var, x: Var) -> Result<Var> {
        let (n, f) = self.matrix_dims(a, "matvec")?;
        if self.shape(x) != [f] {
            return shape_err("matvec", self.shape(a), self.shape(x));
        }
        let data = kernels::matmul(self.value(a).data(), self.value(x).data(), n, f, 1);
        let value = Tensor::vector(data)?;
        Ok(self.push_op(value, Op::MatVec(a, x), &[a, x]))
    }

    fn zip_same(&mut self, a: Var, b: Var, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape(a) != self.shape(b) {
            return shape_err(op, self.shape(a), self.shape(b));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(self.shape(a).to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same(a, b, "add", |x, y| x + y)?;
        Ok(self.push_op(value, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same(a, b, "mul", |x, y| x * y)?;
        Ok(self.push_op(value, Op::Mul(a, b), &[a, b]))
    }

    /// Adds the vector `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (_, f) = self.matrix_dims(a, "add_row")?;
        if self.shape(b) != [f] {
            return shape_err("add_row", self.shape(a), self.shape(b));
        }
        let bias = self.value(b).data();
        let mut value = self.value(a).clone();
        for row in value.data_mut().chunks_mut(f) {
            for (x, &bv) in row.iter_mut().zip(bias) {
                *x += bv;
            }
        }
        Ok(self.push_op(value, Op::AddRow(a, b), &[a, b]))
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let mut value = self.value(a).clone();
        value.data_mut().iter_mut().for_each(|x| *x = f(*x));
        value
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.map(a, |x| x.max(0.0));
        self.push_op(value, Op::Relu(a), &[a])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let value = self.map(a, |x| if x > 0.0 { x } else { slope * x });
        self.push_op(value, Op::LeakyRelu(a, slope), &[a])
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(i) = self.value(a).data().iter().position(|&x| x <= 0.0 || x.is_nan()) {
            return Err(Error::Contract(format!("log of non-positive entry at index {i}")));
        }
        let value = self.map(a, f64::ln);
        Ok(self.push_op(value, Op::Log(a), &[a]))
    }

    /// Multiplies row `i` of `z` by `scale[i]`.
    pub fn scale_rows(&mut self, z: Var, scale: Var) -> Result<Var> {
        let n = self.shape(z)[0];
        if self.shape(scale) != [n] {
            return shape_err("scale_rows", self.shape(z), self.shape(scale));
        }
        let mut value = self.value(z).clone();
        let c = value.cols();
        let s = self.value(scale).data().to_vec();
        for (row, a) in value.data_mut().chunks_mut(c).zip(s) {
            row.iter_mut().for_each(|x| *x *= a);
        }
        Ok(self.push_op(value, Op::ScaleRows(z, scale), &[z, scale]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Contract("concat_cols of zero tensors".into()));
        };
        let (n, _) = self.matrix_dims(first, "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.matrix_dims(p, "concat_cols")?;
            if r != n {
                return shape_err("concat_cols", self.shape(first), self.shape(p));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for i in 0..n {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let value = Tensor::matrix(n, total, data)?;
        Ok(self.push_op(value, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Inverted dropout with a mask drawn from `seed`. `p = 0` returns `a` itself.
    pub fn dropout(&mut self, a: Var, p: f64, seed: u64) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout probability must be in [0,1), got {p}")));
        }
        if p == 0.0 {
            return Ok(a);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.value(a).numel())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let mut value = self.value(a).clone();
        value.data_mut().iter_mut().zip(&mask).for_each(|(x, m)| *x *= m);
        Ok(self.push_op(value, Op::Dropout(a, mask), &[a]))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        self.matrix_dims(a, "softmax_rows")?;
        let mut value = self.value(a).clone();
        let c = value.cols();
        for row in value.data_mut().chunks_mut(c) {
            softmax_in_place(row);
        }
        Ok(self.push_op(value, Op::SoftmaxRows(a), &[a]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        self.push_op(value, Op::Sum(a), &[a])
    }

    /// Row `i` of the result is row `order[i]` of `a`.
    pub fn permute_rows(&mut self, a: Var, order: Arc<[usize]>) -> Result<Var> {
        let n = self.shape(a)[0];
        if order.len() != n || order.iter().any(|&i| i >= n) {
            return Err(Error::Contract(format!(
                "row permutation of length {} does not index {n} rows",
                order.len()
            )));
        }
        let value = self.value(a).gather_rows(&order);
        Ok(self.push_op(value, Op::PermuteRows(a, order), &[a]))
    }

    pub fn conv1d(&mut self, seq: Var, kernel: Var, bias: Var) -> Result<Var> {
        let dims = kernels::conv_dims(self.value(seq), self.value(kernel), self.value(bias))?;
        let data = kernels::conv1d(
            self.value(seq).data(),
            self.value(kernel).data(),
            self.value(bias).data(),
            dims,
        );
        let value = Tensor::matrix(dims.n, dims.g, data)?;
        Ok(self.push_op(
            value,
            Op::Conv1d {
                seq,
                kernel,
                bias,
                dims,
            },
            &[seq, kernel, bias],
        ))
    }

    /// Fixed-weight sparse aggregation `out[v] = Σ_u w_vu x[u]`.
    pub fn spmm(&mut self, adj: &Arc<SparseAdj>, x: Var) -> Result<Var> {
        let (n, f) = self.matrix_dims(x, "spmm")?;
        if n != adj.n() {
            return shape_err("spmm", &[adj.n(), adj.n()], self.shape(x));
        }
        let value = Tensor::matrix(n, f, kernels::spmm(adj, self.value(x).data(), f))?;
        Ok(self.push_op(value, Op::SpMM(Arc::clone(adj), x), &[x]))
    }

    /// Multi-head edge-softmax aggregation over the rows of `adj`.
    ///
    /// `h` is `[n × heads·head_dim]` with heads laid out as column blocks;
    /// `att_src`/`att_dst` are `[heads × head_dim]`. The result keeps the same
    /// layout, so heads come out concatenated.
    pub fn gat(&mut self, adj: &Arc<SparseAdj>, h: Var, att_src: Var, att_dst: Var, slope: f64) -> Result<Var> {
        let dims = kernels::gat_dims(adj, self.value(h), self.value(att_src), self.value(att_dst), slope)?;
        let (data, cache) = kernels::gat_forward(
            adj,
            self.value(h).data(),
            self.value(att_src).data(),
            self.value(att_dst).data(),
            dims,
        );
        let value = Tensor::matrix(adj.n(), dims.heads * dims.head_dim, data)?;
        Ok(self.push_op(
            value,
            Op::Gat {
                adj: Arc::clone(adj),
                h,
                att_src,
                att_dst,
                dims,
                cache,
            },
            &[h, att_src, att_dst],
        ))
    }

    pub fn full_attention(&mut self, z: Var) -> Result<Var> {
        let value = kernels::full_attention_forward(self.value(z))?;
        Ok(self.push_op(value, Op::FullAttention(z), &[z]))
    }

    /// Mean negative log-likelihood of `labels[v]` over the nodes in `mask`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize], mask: &[usize]) -> Result<Var> {
        let (n, classes) = self.matrix_dims(logits, "softmax_cross_entropy")?;
        if mask.is_empty() {
            return Err(Error::Contract("cross-entropy over an empty node mask".into()));
        }
        if labels.len() != n {
            return shape_err("softmax_cross_entropy labels", &[n], &[labels.len()]);
        }
        let mut targets = Vec::with_capacity(mask.len());
        let mut probs = Vec::with_capacity(mask.len() * classes);
        let mut loss = 0.0;
        let lv = self.value(logits);
        for &v in mask {
            let y = *labels
                .get(v)
                .ok_or_else(|| Error::Contract(format!("mask node {v} out of range")))?;
            if y >= classes {
                return Err(Error::Contract(format!("label {y} of node {v} outside [0,{classes})")));
            }
            let row = lv.row(v);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            loss += lse - row[y];
            probs.extend(row.iter().map(|x| (x - lse).exp()));
            targets.push((v, y));
        }
        let value = Tensor::scalar(loss / mask.len() as f64);
        Ok(self.push_op(
            value,
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            },
            &[logits],
        ))
    }

    /// Hash of every piecewise branch taken in the forward pass (activation
    /// signs and row permutations). Two evaluations with equal signatures lie
    /// on the same smooth piece of the recorded function.
    pub fn branch_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(a) | Op::LeakyRelu(a, _) => {
                    for &x in self.value(*a).data() {
                        (x > 0.0).hash(&mut h);
                    }
                }
                Op::PermuteRows(_, order) => order.hash(&mut h),
                Op::Gat { cache, .. } => {
                    for &p in &cache.pre {
                        (p > 0.0).hash(&mut h);
                    }
                }
                _ => {}
            }
        }
        h.finish()
    }

    /// Reverse pass from a scalar `loss`. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| {
                g.filter(|_| node.requires_grad)
                    .map(|data| Tensor::new(node.value.shape().to_vec(), data).expect("grad shape"))
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, delta: Vec<f64>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => g.iter_mut().zip(delta).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
                let p = self.shape(b)[1];
                if self.requires_grad(a) {
                    self.accumulate(grads, a, kernels::matmul_grad_lhs(g, self.value(b).data(), m, k, p));
                }
                if self.requires_grad(b) {
                    self.accumulate(grads, b, kernels::matmul_grad_rhs(self.value(a).data(), g, m, k, p));
                }
            }
            &Op::MatVec(a, x) => {
                let (n, f) = (self.shape(a)[0], self.shape(a)[1]);
                if self.requires_grad(a) {
                    self.accumulate(grads, a, kernels::matmul_grad_lhs(g, self.value(x).data(), n, f, 1));
                }
                if self.requires_grad(x) {
                    self.accumulate(grads, x, kernels::matmul_grad_rhs(self.value(a).data(), g, n, f, 1));
                }
            }
            &Op::Add(a, b) => {
                self.accumulate(grads, a, g.to_vec());
                self.accumulate(grads, b, g.to_vec());
            }
            &Op::AddRow(a, b) => {
                self.accumulate(grads, a, g.to_vec());
                let f = self.shape(b)[0];
                let mut db = vec![0.0; f];
                for row in g.chunks(f) {
                    db.iter_mut().zip(row).for_each(|(d, x)| *d += x);
                }
                self.accumulate(grads, b, db);
            }
            &Op::Mul(a, b) => {
                let (av, bv) = (self.value(a).data(), self.value(b).data());
                self.accumulate(grads, a, g.iter().zip(bv).map(|(x, y)| x * y).collect());
                self.accumulate(grads, b, g.iter().zip(av).map(|(x, y)| x * y).collect());
            }
            &Op::Relu(a) => {
                let d = g.iter().zip(self.value(a).data()).map(|(&x, &y)| if y > 0.0 { x } else { 0.0 });
                self.accumulate(grads, a, d.collect());
            }
            &Op::LeakyRelu(a, slope) => {
                let d = g
                    .iter()
                    .zip(self.value(a).data())
                    .map(|(&x, &y)| if y > 0.0 { x } else { slope * x });
                self.accumulate(grads, a, d.collect());
            }
            &Op::Log(a) => {
                let d = g.iter().zip(self.value(a).data()).map(|(x, y)| x / y);
                self.accumulate(grads, a, d.collect());
            }
            &Op::ScaleRows(z, s) => {
                let c = self.value(z).cols();
                let (zv, sv) = (self.value(z).data(), self.value(s).data());
                if self.requires_grad(z) {
                    let mut dz = g.to_vec();
                    for (row, &a) in dz.chunks_mut(c).zip(sv) {
                        row.iter_mut().for_each(|x| *x *= a);
                    }
                    self.accumulate(grads, z, dz);
                }
                if self.requires_grad(s) {
                    let ds = g
                        .chunks(c)
                        .zip(zv.chunks(c))
                        .map(|(gr, zr)| gr.iter().zip(zr).map(|(x, y)| x * y).sum())
                        .collect();
                    self.accumulate(grads, s, ds);
                }
            }
            Op::ConcatCols(parts) => {
                let n = out.rows();
                let total = out.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    if self.requires_grad(p) {
                        let mut d = Vec::with_capacity(n * w);
                        for i in 0..n {
                            d.extend_from_slice(&g[i * total + offset..i * total + offset + w]);
                        }
                        self.accumulate(grads, p, d);
                    }
                    offset += w;
                }
            }
            Op::Dropout(a, mask) => {
                self.accumulate(grads, *a, g.iter().zip(mask).map(|(x, m)| x * m).collect());
            }
            &Op::SoftmaxRows(a) => {
                let c = out.cols();
                let mut d = Vec::with_capacity(g.len());
                for (gr, yr) in g.chunks(c).zip(out.data().chunks(c)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(x, y)| x * y).sum();
                    d.extend(gr.iter().zip(yr).map(|(x, y)| y * (x - dot)));
                }
                self.accumulate(grads, a, d);
            }
            &Op::Sum(a) => {
                self.accumulate(grads, a, vec![g[0]; self.value(a).numel()]);
            }
            Op::PermuteRows(a, order) => {
                let c = out.cols();
                let mut d = vec![0.0; self.value(*a).numel()];
                for (i, &src) in order.iter().enumerate() {
                    d[src * c..(src + 1) * c].copy_from_slice(&g[i * c..(i + 1) * c]);
                }
                self.accumulate(grads, *a, d);
            }
            &Op::Conv1d {
                seq,
                kernel,
                bias,
                dims,
            } => {
                let cg = kernels::conv1d_backward(self.value(seq).data(), self.value(kernel).data(), g, dims);
                self.accumulate(grads, seq, cg.seq);
                self.accumulate(grads, kernel, cg.kernel);
                self.accumulate(grads, bias, cg.bias);
            }
            Op::SpMM(adj, x) => {
                let f = out.cols();
                self.accumulate(grads, *x, kernels::spmm_backward(adj, g, f));
            }
            Op::Gat {
                adj,
                h,
                att_src,
                att_dst,
                dims,
                cache,
            } => {
                let gg = kernels::gat_backward(
                    adj,
                    self.value(*h).data(),
                    self.value(*att_src).data(),
                    self.value(*att_dst).data(),
                    cache,
                    g,
                    *dims,
                );
                self.accumulate(grads, *h, gg.h);
                self.accumulate(grads, *att_src, gg.att_src);
                self.accumulate(grads, *att_dst, gg.att_dst);
            }
            &Op::FullAttention(z) => {
                let (n, f) = (out.rows(), out.cols());
                let d = kernels::full_attention_backward(self.value(z).data(), out.data(), g, n, f);
                self.accumulate(grads, z, d);
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let lv = self.value(*logits);
                let c = lv.cols();
                let scale = g[0] / targets.len() as f64;
                let mut d = vec![0.0; lv.numel()];
                for (t, &(v, y)) in targets.iter().enumerate() {
                    let row = &mut d[v * c..(v + 1) * c];
                    for (j, dst) in row.iter_mut().enumerate() {
                        let target = if j == y { 1.0 } else { 0.0 };
                        *dst += scale * (probs[t * c + j] - target);
                    }
                }
                self.accumulate(grads, *logits, d);
            }
        }
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut denom = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        denom += *x;
    }
    row.iter_mut().for_each(|x| *x /= denom);
}
