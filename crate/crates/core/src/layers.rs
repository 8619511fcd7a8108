//! Two-layer local encoders: MLP, GCN and GAT.
//!
//! Every encoder maps the feature matrix `[n×d]` to local embeddings `[n×f]`
//! with a ReLU between the layers and no activation after the second one.
//! Dropout, when enabled, is applied to the input features and to the hidden
//! activations.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tensor::{SparseAdj, Tape, Tensor, Var};

/// Attention heads on the first GAT layer; the second layer uses one head.
pub const GAT_HEADS: usize = 8;
pub const GAT_NEGATIVE_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EncoderKind {
    Mlp,
    Gcn,
    Gat,
}

/// Whether a forward pass is for training (dropout on, seeded) or evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train { seed: u64 },
    Eval,
}

impl Mode {
    fn dropout_seed(self, slot: u64) -> Option<u64> {
        match self {
            Mode::Train { seed } => Some(splitmix(seed ^ splitmix(slot))),
            Mode::Eval => None,
        }
    }
}

pub(crate) fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Attention vectors of both GAT layers, `[heads × head_dim]` each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatAttention {
    pub src1: Tensor,
    pub dst1: Tensor,
    pub src2: Tensor,
    pub dst2: Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub kind: EncoderKind,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub attention: Option<GatAttention>,
    pub dropout: f64,
}

/// Glorot/Xavier uniform initialisation.
pub(crate) fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    t.data_mut().iter_mut().for_each(|x| *x = rng.random_range(-limit..=limit));
    t
}

impl EncoderParams {
    pub fn init(
        kind: EncoderKind,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        dropout: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!("dropout must be in [0,1), got {dropout}")));
        }
        if kind == EncoderKind::Gat && hidden % GAT_HEADS != 0 {
            return Err(Error::Config(format!(
                "GAT hidden width {hidden} is not divisible by {GAT_HEADS} heads"
            )));
        }
        let w1 = glorot(&[in_dim, hidden], in_dim, hidden, rng);
        let w2 = glorot(&[hidden, out_dim], hidden, out_dim, rng);
        let attention = (kind == EncoderKind::Gat).then(|| {
            let hd = hidden / GAT_HEADS;
            GatAttention {
                src1: glorot(&[GAT_HEADS, hd], hd, 1, rng),
                dst1: glorot(&[GAT_HEADS, hd], hd, 1, rng),
                src2: glorot(&[1, out_dim], out_dim, 1, rng),
                dst2: glorot(&[1, out_dim], out_dim, 1, rng),
            }
        });
        Ok(Self {
            kind,
            w1,
            b1: Tensor::zeros(&[hidden]),
            w2,
            b2: Tensor::zeros(&[out_dim]),
            attention,
            dropout,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.w1.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.w2.shape()[1]
    }

    pub fn named(&self) -> Vec<(&'static str, &Tensor)> {
        let mut out = vec![("enc.w1", &self.w1), ("enc.b1", &self.b1), ("enc.w2", &self.w2), ("enc.b2", &self.b2)];
        if let Some(a) = &self.attention {
            out.extend([
                ("enc.att_src1", &a.src1),
                ("enc.att_dst1", &a.dst1),
                ("enc.att_src2", &a.src2),
                ("enc.att_dst2", &a.dst2),
            ]);
        }
        out
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        let mut out = vec![
            ("enc.w1", &mut self.w1),
            ("enc.b1", &mut self.b1),
            ("enc.w2", &mut self.w2),
            ("enc.b2", &mut self.b2),
        ];
        if let Some(a) = &mut self.attention {
            out.extend([
                ("enc.att_src1", &mut a.src1),
                ("enc.att_dst1", &mut a.dst1),
                ("enc.att_src2", &mut a.src2),
                ("enc.att_dst2", &mut a.dst2),
            ]);
        }
        out
    }

    /// Pushes every parameter onto `tape` as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape) -> EncoderVars {
        EncoderVars {
            w1: tape.leaf(self.w1.clone()),
            b1: tape.leaf(self.b1.clone()),
            w2: tape.leaf(self.w2.clone()),
            b2: tape.leaf(self.b2.clone()),
            attention: self.attention.as_ref().map(|a| {
                [
                    tape.leaf(a.src1.clone()),
                    tape.leaf(a.dst1.clone()),
                    tape.leaf(a.src2.clone()),
                    tape.leaf(a.dst2.clone()),
                ]
            }),
        }
    }
}

/// Tape handles of [`EncoderParams`], in the order of [`EncoderParams::named`].
#[derive(Clone, Debug)]
pub struct EncoderVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub attention: Option<[Var; 4]>,
}

impl EncoderVars {
    pub fn all(&self) -> Vec<Var> {
        let mut out = vec![self.w1, self.b1, self.w2, self.b2];
        if let Some(a) = self.attention {
            out.extend(a);
        }
        out
    }
}

/// Symmetric renormalised adjacency `D̂^{-1/2} (A + I) D̂^{-1/2}`, where `D̂`
/// counts the added self-loop.
pub fn normalize_adjacency(g: &Graph) -> SparseAdj {
    let n = g.n();
    let inv_sqrt: Vec<f64> = (0..n).map(|v| 1.0 / ((g.degree(v) + 1) as f64).sqrt()).collect();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(g.targets().len() + n);
    let mut weights = Vec::with_capacity(cols.capacity());
    offsets.push(0);
    for v in 0..n {
        cols.push(v);
        weights.push(inv_sqrt[v] * inv_sqrt[v]);
        for &u in g.neighbors(v) {
            cols.push(u);
            weights.push(inv_sqrt[v] * inv_sqrt[u]);
        }
        offsets.push(cols.len());
    }
    SparseAdj::new(n, offsets, cols, weights).expect("graph CSR is well formed")
}

/// Closed neighbourhoods `N(v) ∪ {v}` with unit weights.
pub fn closed_neighborhoods(g: &Graph) -> SparseAdj {
    let n = g.n();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(g.targets().len() + n);
    offsets.push(0);
    for v in 0..n {
        cols.push(v);
        cols.extend_from_slice(g.neighbors(v));
        offsets.push(cols.len());
    }
    let weights = vec![1.0; cols.len()];
    SparseAdj::new(n, offsets, cols, weights).expect("graph CSR is well formed")
}

/// Per-graph structures shared by every forward pass.
#[derive(Clone, Debug)]
pub struct GraphContext {
    pub features: Tensor,
    pub gcn_adj: Arc<SparseAdj>,
    pub closed_adj: Arc<SparseAdj>,
}

impl GraphContext {
    pub fn new(g: &Graph) -> Self {
        Self {
            features: g.features().clone(),
            gcn_adj: Arc::new(normalize_adjacency(g)),
            closed_adj: Arc::new(closed_neighborhoods(g)),
        }
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }
}

fn maybe_dropout(tape: &mut Tape, x: Var, p: f64, mode: Mode, slot: u64) -> Result<Var> {
    match mode.dropout_seed(slot) {
        Some(seed) if p > 0.0 => tape.dropout(x, p, seed),
        _ => Ok(x),
    }
}

fn check_input(tape: &Tape, x: Var, p: &EncoderVars) -> Result<()> {
    let (xs, ws) = (tape.value(x).shape(), tape.value(p.w1).shape());
    if xs.len() != 2 || xs[1] != ws[0] {
        return Err(Error::Shape {
            op: "encoder input",
            lhs: xs.to_vec(),
            rhs: ws.to_vec(),
        });
    }
    Ok(())
}

/// `ReLU(x·W1 + b1)·W2 + b2`, row by row.
pub fn mlp_embed(tape: &mut Tape, x: Var, p: &EncoderVars, dropout: f64, mode: Mode) -> Result<Var> {
    check_input(tape, x, p)?;
    let x = maybe_dropout(tape, x, dropout, mode, 0)?;
    let h = tape.matmul(x, p.w1)?;
    let h = tape.add_row(h, p.b1)?;
    let h = tape.relu(h);
    let h = maybe_dropout(tape, h, dropout, mode, 1)?;
    let z = tape.matmul(h, p.w2)?;
    tape.add_row(z, p.b2)
}

/// Two rounds of normalised aggregation followed by a linear transform.
pub fn gcn_embed(
    tape: &mut Tape,
    adj: &Arc<SparseAdj>,
    x: Var,
    p: &EncoderVars,
    dropout: f64,
    mode: Mode,
) -> Result<Var> {
    check_input(tape, x, p)?;
    let x = maybe_dropout(tape, x, dropout, mode, 0)?;
    let h = tape.matmul(x, p.w1)?;
    let h = tape.spmm(adj, h)?;
    let h = tape.add_row(h, p.b1)?;
    let h = tape.relu(h);
    let h = maybe_dropout(tape, h, dropout, mode, 1)?;
    let z = tape.matmul(h, p.w2)?;
    let z = tape.spmm(adj, z)?;
    tape.add_row(z, p.b2)
}

/// Two attention layers over closed neighbourhoods: multi-head with
/// concatenation first, single head second.
pub fn gat_embed(
    tape: &mut Tape,
    adj: &Arc<SparseAdj>,
    x: Var,
    p: &EncoderVars,
    dropout: f64,
    mode: Mode,
) -> Result<Var> {
    check_input(tape, x, p)?;
    let [src1, dst1, src2, dst2] = p
        .attention
        .ok_or_else(|| Error::Params("GAT encoder without attention parameters".into()))?;
    let x = maybe_dropout(tape, x, dropout, mode, 0)?;
    let h = tape.matmul(x, p.w1)?;
    let h = tape.gat(adj, h, src1, dst1, GAT_NEGATIVE_SLOPE)?;
    let h = tape.add_row(h, p.b1)?;
    let h = tape.relu(h);
    let h = maybe_dropout(tape, h, dropout, mode, 1)?;
    let z = tape.matmul(h, p.w2)?;
    let z = tape.gat(adj, z, src2, dst2, GAT_NEGATIVE_SLOPE)?;
    tape.add_row(z, p.b2)
}

/// Runs the encoder selected by `params.kind`.
pub fn encode(
    tape: &mut Tape,
    ctx: &GraphContext,
    x: Var,
    params: &EncoderParams,
    vars: &EncoderVars,
    mode: Mode,
) -> Result<Var> {
    match params.kind {
        EncoderKind::Mlp => mlp_embed(tape, x, vars, params.dropout, mode),
        EncoderKind::Gcn => gcn_embed(tape, &ctx.gcn_adj, x, vars, params.dropout, mode),
        EncoderKind::Gat => gat_embed(tape, &ctx.closed_adj, x, vars, params.dropout, mode),
    }
}
