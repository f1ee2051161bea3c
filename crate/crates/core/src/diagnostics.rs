//! Gradient checks, gradient-norm profiles, de-rotated state dumps and
//! dead-unit profiles.

use std::io::Write;

use crate::error::{Error, Result};
use crate::model::SequenceModel;
use crate::srnn::{ForwardTrace, SrnnParams};
use crate::tasks::{LossKind, TaskBatch};
use crate::tensor::{circular_shift, Matrix};

/// Denominator floor for the relative error. Below this combined magnitude the
/// comparison is effectively absolute.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Flat index of the parameter with the largest error.
    pub worst_index: Option<usize>,
    pub checked: usize,
    /// Parameters whose perturbation moved some relu input across zero.
    pub skipped: usize,
}

impl GradCheckReport {
    pub fn total(&self) -> usize {
        self.checked + self.skipped
    }

    pub fn skipped_fraction(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.skipped as f64 / self.total() as f64
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compares the model's own backward pass against central differences.
pub fn finite_diff_check<M: SequenceModel>(model: &M, batch: &TaskBatch, eps: f64) -> Result<GradCheckReport> {
    let (out, trace) = model.forward(&batch.inputs)?;
    let (_, dout) = batch.loss(&out)?;
    let grads = model.backward(&trace, &dout)?;
    check_against(model, batch, &grads, eps)
}

/// Compares an arbitrary gradient set against central differences of the
/// batch loss. Used directly to confirm the check notices corrupted gradients.
pub fn check_against<M: SequenceModel>(
    model: &M,
    batch: &TaskBatch,
    analytic: &M,
    eps: f64,
) -> Result<GradCheckReport> {
    if !(1e-7..=1e-4).contains(&eps) {
        return Err(Error::config(format!("finite-difference eps {eps} outside [1e-7, 1e-4]")));
    }
    let n = model.param_count();
    if analytic.param_count() != n {
        return Err(Error::shape("gradient set does not match the model"));
    }
    let (_, base_trace) = model.forward(&batch.inputs)?;
    let base_signs = relu_signs(model, &base_trace);

    let mut report = GradCheckReport { max_rel_err: 0.0, worst_index: None, checked: 0, skipped: 0 };
    let mut probe = model.clone();
    for i in 0..n {
        let theta = model.flat_get(i);
        let mut side = |delta: f64| -> Result<(f64, bool)> {
            probe.flat_set(i, theta + delta);
            let (out, trace) = probe.forward(&batch.inputs)?;
            let kink = relu_signs(&probe, &trace) != base_signs;
            Ok((batch.loss(&out)?.0, kink))
        };
        let (lp, kp) = side(eps)?;
        let (lm, km) = side(-eps)?;
        probe.flat_set(i, theta);
        if kp || km {
            report.skipped += 1;
            continue;
        }
        let numeric = (lp - lm) / (2.0 * eps);
        let err = relative_error(analytic.flat_get(i), numeric);
        report.checked += 1;
        if err > report.max_rel_err || err.is_nan() {
            report.max_rel_err = err;
            report.worst_index = Some(i);
        }
    }
    Ok(report)
}

fn relu_signs<M: SequenceModel>(model: &M, trace: &M::Trace) -> Vec<bool> {
    model
        .relu_preactivations(trace)
        .into_iter()
        .flat_map(|m| m.as_slice().iter().map(|&z| z > 0.0))
        .collect()
}

/// `‖∂L/∂h_t‖` for t = 1..T (Frobenius norm over the batch). The batch must
/// carry its loss on the final step only.
pub fn hidden_grad_profile<M: SequenceModel>(model: &M, batch: &TaskBatch) -> Result<Vec<f64>> {
    let final_only = match batch.loss_kind() {
        LossKind::PerStepCe => batch.loss_mask.iter().rev().skip(1).all(|&m| !m),
        LossKind::FinalCe | LossKind::FinalMse => true,
    };
    if !final_only {
        return Err(Error::config("gradient profile needs a loss on the final step only"));
    }
    let (out, trace) = model.forward(&batch.inputs)?;
    let (_, dout) = batch.loss(&out)?;
    let back = model.backward_full(&trace, &dout, true)?;
    let hidden = back.hidden_grads.expect("hidden gradients were requested");
    Ok(hidden.iter().map(Matrix::frobenius_norm).collect())
}

/// States of sample `sample` with the shift undone: column `t` is
/// `shift(h_t, -t)` for t = 0..=T, so each row follows one logical channel.
pub fn derotate_states(trace: &ForwardTrace, sample: usize) -> Matrix {
    let d_h = trace.h[0].cols();
    let steps = trace.h.len();
    let mut out = Matrix::zeros(d_h, steps);
    for (t, h) in trace.h.iter().enumerate() {
        let col = circular_shift(h.row(sample), -(t as isize));
        for (u, v) in col.into_iter().enumerate() {
            out.set(u, t, v);
        }
    }
    out
}

/// Fraction of hidden units that are exactly zero after each step, averaged
/// over the batch.
pub fn dead_unit_profile<M: SequenceModel>(model: &M, batch: &TaskBatch) -> Result<Vec<f64>> {
    let (_, trace) = model.forward(&batch.inputs)?;
    Ok(model.hidden_states(&trace)[1..]
        .iter()
        .map(|h| h.as_slice().iter().filter(|&&v| v == 0.0).count() as f64 / h.len() as f64)
        .collect())
}

/// Fraction of logical (de-rotated) channels that have been exactly zero at
/// least once by step t, averaged over the batch. Once a channel has been
/// zeroed by a relu, gradients from later losses no longer reach its past.
pub fn ruined_unit_profile(model: &SrnnParams, batch: &TaskBatch) -> Result<Vec<f64>> {
    let (_, trace) = model.forward(&batch.inputs)?;
    let d_h = model.hidden_size();
    let mut ruined = vec![false; trace.batch * d_h];
    let mut count = 0usize;
    let mut out = Vec::with_capacity(trace.steps());
    for (t, h) in trace.h.iter().enumerate().skip(1) {
        for s in 0..trace.batch {
            let row = h.row(s);
            for j in 0..d_h {
                // Channel j sits at index j - t after t shifts.
                let idx = (j + d_h - t % d_h) % d_h;
                let r = &mut ruined[s * d_h + j];
                if !*r && row[idx] == 0.0 {
                    *r = true;
                    count += 1;
                }
            }
        }
        out.push(count as f64 / ruined.len() as f64);
    }
    Ok(out)
}

/// Writes a `units × steps` matrix as CSV with header `unit,t0,t1,...`.
pub fn write_states_csv(mut w: impl Write, states: &Matrix) -> std::io::Result<()> {
    write!(w, "unit")?;
    for t in 0..states.cols() {
        write!(w, ",t{t}")?;
    }
    writeln!(w)?;
    for u in 0..states.rows() {
        write!(w, "{u}")?;
        for v in states.row(u) {
            write!(w, ",{v:?}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
