use crate::error::Result;
use crate::losses::{entmax_loss_with, OneHotTarget};
use crate::sampling::SampleRng;
use crate::transforms::EntmaxParams;

use super::model::ModelParams;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Number of parameters probed per check.
pub const FD_PROBES: usize = 50;

/// Outcome of comparing backpropagated gradients against finite differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// `(parameter index, analytic, numeric)` for each probe.
    pub probes: Vec<(usize, f64, f64)>,
}

/// Lower bound on the denominator of [`relative_error`].
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|, REL_ERROR_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERROR_FLOOR)
}

/// Compares the backpropagated entmax-loss gradient with central differences
/// on [`FD_PROBES`] randomly chosen parameters that influence the output.
pub fn finite_diff_check(
    params: &ModelParams,
    context: &[usize],
    gold: usize,
    alpha: f64,
    seed: u64,
) -> Result<GradCheck> {
    // A tight bisection keeps the loss noise well below the FD resolution.
    let entmax = EntmaxParams::with_solver(alpha, 1e-13, 200)?;
    let target = OneHotTarget::new(gold, params.vocab().len())?;
    let loss_at = |p: &ModelParams| -> Result<f64> {
        Ok(entmax_loss_with(&p.forward(context)?, target, &entmax)?.value)
    };

    let acts = params.forward_cached(context)?;
    let loss = entmax_loss_with(&acts.scores, target, &entmax)?;
    let mut analytic = vec![0.0; params.num_params()];
    params.backward(&acts, &loss.grad, &mut analytic);

    let active = params.active_params(&acts.context);
    let mut rng = SampleRng::seed_from_u64(seed);
    let mut probe = params.clone();
    let mut probes = Vec::with_capacity(FD_PROBES);
    let mut max_rel_error: f64 = 0.0;
    for _ in 0..FD_PROBES {
        let idx = active[rng.below(active.len())];
        let original = probe.weights()[idx];
        probe.weights_mut()[idx] = original + FD_STEP;
        let up = loss_at(&probe)?;
        probe.weights_mut()[idx] = original - FD_STEP;
        let down = loss_at(&probe)?;
        probe.weights_mut()[idx] = original;
        let numeric = (up - down) / (2.0 * FD_STEP);
        max_rel_error = max_rel_error.max(relative_error(analytic[idx], numeric));
        probes.push((idx, analytic[idx], numeric));
    }
    Ok(GradCheck {
        max_rel_error,
        probes,
    })
}
