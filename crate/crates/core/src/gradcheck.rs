//! Central finite-difference check of tape gradients.
//!
//! A coordinate is skipped when either perturbed evaluation takes a different
//! piecewise branch than the unperturbed one (an activation changes sign or a
//! sort order changes), since the function is not differentiable across that
//! boundary. The number of skipped coordinates is reported.

use crate::error::{Error, Result};
use crate::layers::{GraphContext, Mode};
use crate::model::{forward, ModelParams};
use crate::tensor::{Tape, Tensor, Var};

/// Denominator floor of the relative error, so gradients whose magnitude is
/// at the level of rounding noise are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(parameter, entry)` with the largest error.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    pub skipped: usize,
}

impl GradCheckReport {
    pub fn skipped_fraction(&self) -> f64 {
        let total = self.checked + self.skipped;
        if total == 0 {
            0.0
        } else {
            self.skipped as f64 / total as f64
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares backward gradients of the scalar built by `build` against central
/// differences with step `eps`, over every entry of every tensor in `params`.
pub fn check_gradients<F>(params: &[Tensor], eps: f64, mut build: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut eval = |ps: &[Tensor]| -> Result<(f64, u64, Tape, Var, Vec<Var>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.leaf(p.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        if tape.value(loss).numel() != 1 {
            return Err(Error::Contract("gradient check needs a scalar".into()));
        }
        let value = tape.value(loss).data()[0];
        Ok((value, tape.branch_signature(), tape, loss, vars))
    };
    let (_, base_sig, tape, loss, vars) = eval(params)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| grads.get_or_zeros(v, p.shape()))
        .collect();

    let mut work = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped: 0,
    };
    for (pi, param) in params.iter().enumerate() {
        for j in 0..param.numel() {
            let orig = param.data()[j];
            work[pi].data_mut()[j] = orig + eps;
            let (plus, sig_plus, ..) = eval(&work)?;
            work[pi].data_mut()[j] = orig - eps;
            let (minus, sig_minus, ..) = eval(&work)?;
            work[pi].data_mut()[j] = orig;
            if sig_plus != base_sig || sig_minus != base_sig {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error(analytic[pi].data()[j], numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((pi, j));
            }
        }
    }
    Ok(report)
}

/// Gradient check of the training loss of a full model over `mask`.
pub fn check_model_gradients(
    ctx: &GraphContext,
    labels: &[usize],
    mask: &[usize],
    params: &ModelParams,
    mode: Mode,
    eps: f64,
) -> Result<GradCheckReport> {
    let tensors: Vec<Tensor> = params.named().into_iter().map(|(_, t)| t.clone()).collect();
    check_gradients(&tensors, eps, |tape, leaves| {
        let vars = params.vars_from(leaves)?;
        let out = forward(tape, ctx, params, &vars, mode)?;
        tape.softmax_cross_entropy(out.logits, labels, mask)
    })
}
