//! Attention-guided sorting and convolution over the sorted node sequence.
//!
//! Scores `a_v = c·z_v` order the nodes; the sequence of scaled embeddings
//! `a_v z_v` in that order goes through a small 1D convolution stack, and the
//! result is scattered back to node order and concatenated with `z` for the
//! classifier.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Permutation;
use crate::layers::glorot;
use crate::tensor::{Tape, Tensor, Var};

/// Maximum depth of the convolution stack.
pub const MAX_CONV_LAYERS: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    /// `[k × f × f]`
    pub kernel: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonLocalParams {
    pub calibration: Tensor,
    pub convs: Vec<ConvLayer>,
    /// `[2f × C]`, rows `0..f` act on `ẑ` and rows `f..2f` on `z`.
    pub classifier_w: Tensor,
    pub classifier_b: Tensor,
    pub kernel_size: usize,
}

impl NonLocalParams {
    /// Two conv layers of width `f`, Glorot kernels, Gaussian calibration
    /// vector with variance `1/f`.
    pub fn init(f: usize, classes: usize, kernel_size: usize, rng: &mut impl Rng) -> Result<Self> {
        Self::with_depth(f, classes, kernel_size, MAX_CONV_LAYERS, rng)
    }

    pub fn with_depth(
        f: usize,
        classes: usize,
        kernel_size: usize,
        depth: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if kernel_size % 2 == 0 {
            return Err(Error::Config(format!("kernel size must be odd, got {kernel_size}")));
        }
        if depth == 0 || depth > MAX_CONV_LAYERS {
            return Err(Error::Config(format!(
                "conv stack depth must be in 1..={MAX_CONV_LAYERS}, got {depth}"
            )));
        }
        let normal = Normal::new(0.0, (1.0 / f as f64).sqrt()).expect("positive variance");
        let calibration = Tensor::vector((0..f).map(|_| normal.sample(rng)).collect())?;
        let fan = kernel_size * f;
        let convs = (0..depth)
            .map(|_| ConvLayer {
                kernel: glorot(&[kernel_size, f, f], fan, fan, rng),
                bias: Tensor::zeros(&[f]),
            })
            .collect();
        Ok(Self {
            calibration,
            convs,
            classifier_w: glorot(&[2 * f, classes], 2 * f, classes, rng),
            classifier_b: Tensor::zeros(&[classes]),
            kernel_size,
        })
    }

    pub fn width(&self) -> usize {
        self.calibration.numel()
    }

    /// Half-width of the receptive field of the whole stack over the sequence.
    pub fn receptive_half_width(&self) -> usize {
        self.convs.len() * (self.kernel_size - 1) / 2
    }

    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![("nl.calibration".to_string(), &self.calibration)];
        for (i, c) in self.convs.iter().enumerate() {
            out.push((format!("nl.conv{}.kernel", i + 1), &c.kernel));
            out.push((format!("nl.conv{}.bias", i + 1), &c.bias));
        }
        out.push(("nl.classifier_w".into(), &self.classifier_w));
        out.push(("nl.classifier_b".into(), &self.classifier_b));
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = vec![("nl.calibration".to_string(), &mut self.calibration)];
        for (i, c) in self.convs.iter_mut().enumerate() {
            out.push((format!("nl.conv{}.kernel", i + 1), &mut c.kernel));
            out.push((format!("nl.conv{}.bias", i + 1), &mut c.bias));
        }
        out.push(("nl.classifier_w".into(), &mut self.classifier_w));
        out.push(("nl.classifier_b".into(), &mut self.classifier_b));
        out
    }

    pub fn bind(&self, tape: &mut Tape) -> NonLocalVars {
        NonLocalVars {
            calibration: tape.leaf(self.calibration.clone()),
            convs: self
                .convs
                .iter()
                .map(|c| (tape.leaf(c.kernel.clone()), tape.leaf(c.bias.clone())))
                .collect(),
            classifier_w: tape.leaf(self.classifier_w.clone()),
            classifier_b: tape.leaf(self.classifier_b.clone()),
        }
    }
}

/// Tape handles of [`NonLocalParams`], in the order of [`NonLocalParams::named`].
#[derive(Clone, Debug)]
pub struct NonLocalVars {
    pub calibration: Var,
    pub convs: Vec<(Var, Var)>,
    pub classifier_w: Var,
    pub classifier_b: Var,
}

impl NonLocalVars {
    pub fn all(&self) -> Vec<Var> {
        let mut out = vec![self.calibration];
        for &(k, b) in &self.convs {
            out.extend([k, b]);
        }
        out.extend([self.classifier_w, self.classifier_b]);
        out
    }
}

/// `score_v = c·z_v`.
pub fn attention_scores(tape: &mut Tape, z: Var, c: Var) -> Result<Var> {
    tape.matvec(z, c)
}

/// Stable ascending sort of `scores`; ties keep ascending node index.
pub fn sort_permutation(scores: &[f64]) -> Result<Permutation> {
    if let Some(v) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::Contract(format!("attention score of node {v} is NaN")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    debug_assert!(order.windows(2).all(|w| scores[w[0]] <= scores[w[1]]));
    Permutation::from_order(order)
}

/// Conv stack over the score-scaled embeddings in sorted order, returned in
/// node order. `perm` is treated as a constant of the recorded pass.
pub fn nonlocal_aggregate(
    tape: &mut Tape,
    z: Var,
    scores: Var,
    perm: &Permutation,
    convs: &[(Var, Var)],
) -> Result<Var> {
    let n = tape.value(z).rows();
    if perm.len() != n {
        return Err(Error::Contract(format!(
            "permutation of length {} for {n} embeddings",
            perm.len()
        )));
    }
    if convs.is_empty() {
        return Err(Error::Contract("empty convolution stack".into()));
    }
    let scaled = tape.scale_rows(z, scores)?;
    let mut seq = tape.permute_rows(scaled, Arc::from(perm.order()))?;
    for (i, &(kernel, bias)) in convs.iter().enumerate() {
        if i > 0 {
            seq = tape.relu(seq);
        }
        seq = tape.conv1d(seq, kernel, bias)?;
    }
    tape.permute_rows(seq, Arc::from(perm.inverse()))
}

/// `[ẑ ‖ z]·W + b`.
pub fn predict(tape: &mut Tape, z: Var, zhat: Var, w: Var, b: Var) -> Result<Var> {
    let joined = tape.concat_cols(&[zhat, z])?;
    let logits = tape.matmul(joined, w)?;
    tape.add_row(logits, b)
}

/// Dense dot-product attention of every node over all nodes.
pub fn full_attention_baseline(tape: &mut Tape, z: Var) -> Result<Var> {
    tape.full_attention(z)
}

/// Scores, permutation and aggregated embeddings of one non-local pass.
#[derive(Clone, Debug)]
pub struct NonLocalOutput {
    pub scores: Var,
    pub perm: Permutation,
    pub zhat: Var,
    pub logits: Var,
}

/// Full non-local head on top of local embeddings `z`.
pub fn nonlocal_head(tape: &mut Tape, z: Var, vars: &NonLocalVars) -> Result<NonLocalOutput> {
    let scores = attention_scores(tape, z, vars.calibration)?;
    let perm = sort_permutation(tape.value(scores).data())?;
    let zhat = nonlocal_aggregate(tape, z, scores, &perm, &vars.convs)?;
    let logits = predict(tape, z, zhat, vars.classifier_w, vars.classifier_b)?;
    Ok(NonLocalOutput {
        scores,
        perm,
        zhat,
        logits,
    })
}
