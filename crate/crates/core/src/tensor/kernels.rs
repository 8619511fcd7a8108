//! Raw forward/backward kernels over row-major slices.
//!
//! Neighbourhood reductions (sparse aggregation, edge softmax) sum their terms
//! in an order fixed by the term values rather than by node ids, so the result
//! does not depend on how nodes are numbered.

use std::cmp::Ordering;

use super::{SparseAdj, Tensor};
use crate::error::{shape_err, Error, Result};

pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * p];
    for i in 0..m {
        let orow = &mut out[i * p..(i + 1) * p];
        for t in 0..k {
            let x = a[i * k + t];
            if x == 0.0 {
                continue;
            }
            let brow = &b[t * p..(t + 1) * p];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += x * bv;
            }
        }
    }
    out
}

/// `dC · Bᵀ`
pub(crate) fn matmul_grad_lhs(dc: &[f64], b: &[f64], m: usize, k: usize, p: usize) -> Vec<f64> {
    let mut da = vec![0.0; m * k];
    for i in 0..m {
        let drow = &dc[i * p..(i + 1) * p];
        for t in 0..k {
            let brow = &b[t * p..(t + 1) * p];
            da[i * k + t] = drow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    da
}

/// `Aᵀ · dC`
pub(crate) fn matmul_grad_rhs(a: &[f64], dc: &[f64], m: usize, k: usize, p: usize) -> Vec<f64> {
    let mut db = vec![0.0; k * p];
    for i in 0..m {
        let drow = &dc[i * p..(i + 1) * p];
        for t in 0..k {
            let x = a[i * k + t];
            if x == 0.0 {
                continue;
            }
            for (o, &d) in db[t * p..(t + 1) * p].iter_mut().zip(drow) {
                *o += x * d;
            }
        }
    }
    db
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvDims {
    pub n: usize,
    pub f: usize,
    pub k: usize,
    pub g: usize,
}

impl ConvDims {
    fn half(&self) -> usize {
        (self.k - 1) / 2
    }

    /// Input position feeding output `i` through kernel tap `t`, if inside the sequence.
    fn source(&self, i: usize, t: usize) -> Option<usize> {
        let src = (i + t).checked_sub(self.half())?;
        (src < self.n).then_some(src)
    }
}

pub(crate) fn conv1d(seq: &[f64], kernel: &[f64], bias: &[f64], d: ConvDims) -> Vec<f64> {
    let ConvDims { n, f, k, g } = d;
    let mut out = Vec::with_capacity(n * g);
    for _ in 0..n {
        out.extend_from_slice(bias);
    }
    for i in 0..n {
        let orow = &mut out[i * g..(i + 1) * g];
        for t in 0..k {
            let Some(src) = d.source(i, t) else { continue };
            for c in 0..f {
                let x = seq[src * f + c];
                if x == 0.0 {
                    continue;
                }
                let krow = &kernel[(t * f + c) * g..(t * f + c + 1) * g];
                for (o, &w) in orow.iter_mut().zip(krow) {
                    *o += x * w;
                }
            }
        }
    }
    out
}

pub(crate) struct ConvGrads {
    pub seq: Vec<f64>,
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

pub(crate) fn conv1d_backward(seq: &[f64], kernel: &[f64], dout: &[f64], d: ConvDims) -> ConvGrads {
    let ConvDims { n, f, k, g } = d;
    let mut dseq = vec![0.0; n * f];
    let mut dker = vec![0.0; k * f * g];
    let mut dbias = vec![0.0; g];
    for i in 0..n {
        let drow = &dout[i * g..(i + 1) * g];
        for (b, &x) in dbias.iter_mut().zip(drow) {
            *b += x;
        }
        for t in 0..k {
            let Some(src) = d.source(i, t) else { continue };
            for c in 0..f {
                let base = (t * f + c) * g;
                let krow = &kernel[base..base + g];
                dseq[src * f + c] += drow.iter().zip(krow).map(|(a, b)| a * b).sum::<f64>();
                let x = seq[src * f + c];
                for (w, &dv) in dker[base..base + g].iter_mut().zip(drow) {
                    *w += x * dv;
                }
            }
        }
    }
    ConvGrads {
        seq: dseq,
        kernel: dker,
        bias: dbias,
    }
}

/// Same-length 1D convolution with zero padding.
///
/// `seq` is `[n×f]`, `kernel` is `[k×f×g]` with odd `k`, `bias` is `[g]`.
pub fn conv1d_forward(seq: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let d = conv_dims(seq, kernel, bias)?;
    Tensor::matrix(d.n, d.g, conv1d(seq.data(), kernel.data(), bias.data(), d))
}

pub(crate) fn conv_dims(seq: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<ConvDims> {
    if kernel.shape().len() != 3 {
        return shape_err("conv1d kernel rank", kernel.shape(), &[0, 0, 0]);
    }
    let (k, kf, g) = (kernel.shape()[0], kernel.shape()[1], kernel.shape()[2]);
    if k % 2 == 0 {
        return Err(Error::Config(format!("conv1d kernel size must be odd, got {k}")));
    }
    if seq.shape().len() != 2 || seq.shape()[1] != kf {
        return shape_err("conv1d", seq.shape(), kernel.shape());
    }
    if bias.shape() != [g] {
        return shape_err("conv1d bias", bias.shape(), kernel.shape());
    }
    Ok(ConvDims {
        n: seq.shape()[0],
        f: kf,
        k,
        g,
    })
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Sparse aggregation `out[v] = Σ_u w_vu x[u]`.
pub(crate) fn spmm(adj: &SparseAdj, x: &[f64], f: usize) -> Vec<f64> {
    let (cols, weights) = (adj.cols(), adj.weights());
    let row = |u: usize| &x[u * f..(u + 1) * f];
    let mut out = vec![0.0; adj.n() * f];
    let mut order = Vec::new();
    for v in 0..adj.n() {
        order.clear();
        order.extend(adj.row_range(v));
        order.sort_unstable_by(|&a, &b| {
            weights[a]
                .total_cmp(&weights[b])
                .then_with(|| lex_cmp(row(cols[a]), row(cols[b])))
        });
        let orow = &mut out[v * f..(v + 1) * f];
        for &e in &order {
            let w = weights[e];
            for (o, &xv) in orow.iter_mut().zip(row(cols[e])) {
                *o += w * xv;
            }
        }
    }
    out
}

pub(crate) fn spmm_backward(adj: &SparseAdj, dout: &[f64], f: usize) -> Vec<f64> {
    let mut dx = vec![0.0; adj.n() * f];
    for v in 0..adj.n() {
        let drow = &dout[v * f..(v + 1) * f];
        for e in adj.row_range(v) {
            let (u, w) = (adj.cols()[e], adj.weights()[e]);
            for (d, &g) in dx[u * f..(u + 1) * f].iter_mut().zip(drow) {
                *d += w * g;
            }
        }
    }
    dx
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct GatDims {
    pub heads: usize,
    pub head_dim: usize,
    pub slope: f64,
}

impl GatDims {
    fn width(&self) -> usize {
        self.heads * self.head_dim
    }
}

/// Per-head edge scores and softmax weights, indexed `[head * nnz + entry]`.
pub(crate) struct GatCache {
    pub pre: Vec<f64>,
    pub alpha: Vec<f64>,
}

fn head_slice(h: &[f64], u: usize, k: usize, d: GatDims) -> &[f64] {
    let start = u * d.width() + k * d.head_dim;
    &h[start..start + d.head_dim]
}

fn head_scores(h: &[f64], att: &[f64], n: usize, k: usize, d: GatDims) -> Vec<f64> {
    let a = &att[k * d.head_dim..(k + 1) * d.head_dim];
    (0..n)
        .map(|u| head_slice(h, u, k, d).iter().zip(a).map(|(x, y)| x * y).sum())
        .collect()
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

pub(crate) fn gat_forward(
    adj: &SparseAdj,
    h: &[f64],
    att_src: &[f64],
    att_dst: &[f64],
    d: GatDims,
) -> (Vec<f64>, GatCache) {
    let (n, nnz, width) = (adj.n(), adj.nnz(), d.width());
    let cols = adj.cols();
    let mut out = vec![0.0; n * width];
    let mut pre = vec![0.0; d.heads * nnz];
    let mut alpha = vec![0.0; d.heads * nnz];
    let mut order = Vec::new();
    for k in 0..d.heads {
        let s_src = head_scores(h, att_src, n, k, d);
        let s_dst = head_scores(h, att_dst, n, k, d);
        let base = k * nnz;
        for v in 0..n {
            let range = adj.row_range(v);
            if range.is_empty() {
                continue;
            }
            order.clear();
            order.extend(range.clone());
            order.sort_unstable_by(|&a, &b| {
                let (ua, ub) = (cols[a], cols[b]);
                s_src[ua]
                    .total_cmp(&s_src[ub])
                    .then_with(|| lex_cmp(head_slice(h, ua, k, d), head_slice(h, ub, k, d)))
            });
            let mut max = f64::NEG_INFINITY;
            for e in range.clone() {
                let p = s_dst[v] + s_src[cols[e]];
                pre[base + e] = p;
                max = max.max(leaky(p, d.slope));
            }
            let mut denom = 0.0;
            for &e in &order {
                let ex = (leaky(pre[base + e], d.slope) - max).exp();
                alpha[base + e] = ex;
                denom += ex;
            }
            let ostart = v * width + k * d.head_dim;
            for &e in &order {
                let a = alpha[base + e] / denom;
                alpha[base + e] = a;
                let hu = head_slice(h, cols[e], k, d);
                for (o, &x) in out[ostart..ostart + d.head_dim].iter_mut().zip(hu) {
                    *o += a * x;
                }
            }
        }
    }
    (out, GatCache { pre, alpha })
}

pub(crate) struct GatGrads {
    pub h: Vec<f64>,
    pub att_src: Vec<f64>,
    pub att_dst: Vec<f64>,
}

pub(crate) fn gat_backward(
    adj: &SparseAdj,
    h: &[f64],
    att_src: &[f64],
    att_dst: &[f64],
    cache: &GatCache,
    dout: &[f64],
    d: GatDims,
) -> GatGrads {
    let (n, nnz, width, fh) = (adj.n(), adj.nnz(), d.width(), d.head_dim);
    let cols = adj.cols();
    let mut dh = vec![0.0; n * width];
    let mut datt_src = vec![0.0; d.heads * fh];
    let mut datt_dst = vec![0.0; d.heads * fh];
    let mut dalpha = Vec::new();
    for k in 0..d.heads {
        let base = k * nnz;
        let mut ds_src = vec![0.0; n];
        let mut ds_dst = vec![0.0; n];
        for v in 0..n {
            let range = adj.row_range(v);
            let gv = &dout[v * width + k * fh..v * width + (k + 1) * fh];
            dalpha.clear();
            let mut weighted = 0.0;
            for e in range.clone() {
                let u = cols[e];
                let a = cache.alpha[base + e];
                let hu = head_slice(h, u, k, d);
                let da: f64 = gv.iter().zip(hu).map(|(x, y)| x * y).sum();
                weighted += a * da;
                dalpha.push(da);
                let start = u * width + k * fh;
                for (dst, &g) in dh[start..start + fh].iter_mut().zip(gv) {
                    *dst += a * g;
                }
            }
            for (i, e) in range.enumerate() {
                let a = cache.alpha[base + e];
                let de = a * (dalpha[i] - weighted);
                let dpre = if cache.pre[base + e] > 0.0 { de } else { d.slope * de };
                ds_dst[v] += dpre;
                ds_src[cols[e]] += dpre;
            }
        }
        let a_src = &att_src[k * fh..(k + 1) * fh];
        let a_dst = &att_dst[k * fh..(k + 1) * fh];
        for u in 0..n {
            let start = u * width + k * fh;
            for j in 0..fh {
                let hv = h[start + j];
                dh[start + j] += ds_src[u] * a_src[j] + ds_dst[u] * a_dst[j];
                datt_src[k * fh + j] += ds_src[u] * hv;
                datt_dst[k * fh + j] += ds_dst[u] * hv;
            }
        }
    }
    GatGrads {
        h: dh,
        att_src: datt_src,
        att_dst: datt_dst,
    }
}

pub(crate) fn gat_dims(adj: &SparseAdj, h: &Tensor, att_src: &Tensor, att_dst: &Tensor, slope: f64) -> Result<GatDims> {
    if att_src.shape().len() != 2 || att_src.shape() != att_dst.shape() {
        return shape_err("gat attention", att_src.shape(), att_dst.shape());
    }
    let (heads, head_dim) = (att_src.shape()[0], att_src.shape()[1]);
    if h.shape() != [adj.n(), heads * head_dim] {
        return shape_err("gat features", h.shape(), &[adj.n(), heads * head_dim]);
    }
    Ok(GatDims {
        heads,
        head_dim,
        slope,
    })
}

/// Edge softmax weights of a multi-head attention layer.
///
/// Returns one value per (head, sparse entry), laid out `[head * nnz + entry]`,
/// where entry `e` in row `v` is the weight node `v` assigns to `cols[e]`.
pub fn gat_attention_weights(
    adj: &SparseAdj,
    h: &Tensor,
    att_src: &Tensor,
    att_dst: &Tensor,
    slope: f64,
) -> Result<Vec<f64>> {
    let d = gat_dims(adj, h, att_src, att_dst, slope)?;
    Ok(gat_forward(adj, h.data(), att_src.data(), att_dst.data(), d).1.alpha)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Softmax weights of row `v` against every node, written into `a`.
fn attention_row(z: &[f64], n: usize, f: usize, v: usize, a: &mut [f64]) {
    let zv = &z[v * f..(v + 1) * f];
    let mut max = f64::NEG_INFINITY;
    for (u, s) in a.iter_mut().enumerate() {
        *s = dot(zv, &z[u * f..(u + 1) * f]);
        max = max.max(*s);
    }
    let mut denom = 0.0;
    for s in a.iter_mut() {
        *s = (*s - max).exp();
        denom += *s;
    }
    for s in a.iter_mut().take(n) {
        *s /= denom;
    }
}

pub(crate) fn full_attention(z: &[f64], n: usize, f: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * f];
    let mut a = vec![0.0; n];
    for v in 0..n {
        attention_row(z, n, f, v, &mut a);
        let orow = &mut out[v * f..(v + 1) * f];
        for (u, &w) in a.iter().enumerate() {
            for (o, &x) in orow.iter_mut().zip(&z[u * f..(u + 1) * f]) {
                *o += w * x;
            }
        }
    }
    out
}

/// Recomputes each attention row instead of storing the `n×n` matrix.
pub(crate) fn full_attention_backward(z: &[f64], out: &[f64], dout: &[f64], n: usize, f: usize) -> Vec<f64> {
    let mut dz = vec![0.0; n * f];
    let mut a = vec![0.0; n];
    let mut dzv = vec![0.0; f];
    for v in 0..n {
        attention_row(z, n, f, v, &mut a);
        let gv = &dout[v * f..(v + 1) * f];
        let zv = &z[v * f..(v + 1) * f];
        let go = dot(gv, &out[v * f..(v + 1) * f]);
        dzv.fill(0.0);
        for (u, &w) in a.iter().enumerate() {
            let zu = &z[u * f..(u + 1) * f];
            let ds = w * (dot(gv, zu) - go);
            let du = &mut dz[u * f..(u + 1) * f];
            for j in 0..f {
                du[j] += w * gv[j] + ds * zv[j];
                dzv[j] += ds * zu[j];
            }
        }
        for (d, x) in dz[v * f..(v + 1) * f].iter_mut().zip(&dzv) {
            *d += x;
        }
    }
    dz
}

/// Dense dot-product attention over all node pairs: `o_v = Σ_u softmax_u(z_v·z_u) z_u`.
pub fn full_attention_forward(z: &Tensor) -> Result<Tensor> {
    if z.shape().len() != 2 {
        return shape_err("full_attention", z.shape(), &[0, 0]);
    }
    let (n, f) = (z.shape()[0], z.shape()[1]);
    Tensor::matrix(n, f, full_attention(z.data(), n, f))
}
