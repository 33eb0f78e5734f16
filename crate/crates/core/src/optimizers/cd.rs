use alloc::vec::Vec;

use super::{applied_thresholds, checked_objective, prepare, CoordinateState, IterationRecord, NoisePlan, OptimizerConfig, OptimizerRun};
use crate::accountant::GaussianCalibration;
use crate::error::{invalid, Error, Result};
use crate::mechanisms::NoiseRng;
use crate::optimizers::Algorithm;
use crate::problem::{soft_threshold, Problem};

/// Private randomized coordinate descent.
///
/// Each iteration draws `j` uniformly, releases the clipped gradient entry
/// plus `N(0, stds_j²)` and steps with `γ / M_j`, applying the coordinate
/// prox when the regularizer is L1.
pub fn run_dp_cd(problem: &Problem, config: &OptimizerConfig, stds: &[f64], rng: &mut NoiseRng) -> Result<OptimizerRun> {
    if config.algorithm != Algorithm::DpCd {
        return Err(invalid("algorithm", "expected dp-cd"));
    }
    let config = prepare(problem, config)?;
    let p = problem.p();
    if stds.len() != p {
        return Err(Error::DimensionMismatch { expected: p, found: stds.len() });
    }
    if !stds.iter().all(|s| *s >= 0.0 && s.is_finite()) {
        return Err(invalid("stds", "must be finite and nonnegative"));
    }
    let m = problem.smoothness();
    let thresholds = applied_thresholds(problem, config.clipping_factor);
    let l1 = problem.regularizer().l1_strength();
    let total = config.iterations;

    let mut state = CoordinateState::zero(problem);
    let mut trace = Vec::with_capacity(total);
    for t in 0..total {
        let j = rng.index(p);
        let g = problem.clipped_coordinate_gradient_at(state.w[j], &state.z, j, thresholds[j]);
        let noise = rng.gaussian(stds[j]);
        let step = config.step_factor / m[j];
        let mut value = state.w[j] - step * (g + noise);
        if l1 > 0.0 {
            value = soft_threshold(value, step * l1);
        }
        if !value.is_finite() {
            return Err(Error::Diverged { iteration: t });
        }
        state.set(problem, j, value);
        let objective = if config.recording.wants(t + 1, total) {
            Some(checked_objective(problem.objective_at(&state.w, &state.z), t)?)
        } else {
            None
        };
        trace.push(IterationRecord {
            t,
            coordinate: Some(j),
            gradient: g,
            release_noise: noise,
            selection_noise: Vec::new(),
            objective,
        });
    }

    let final_objective = checked_objective(problem.objective_at(&state.w, &state.z), total)?;
    let passes = config.passes(problem);
    Ok(OptimizerRun {
        noise: NoisePlan::Gaussian(GaussianCalibration {
            noise_multiplier: 0.0,
            stds: stds.to_vec(),
            iterations: total,
        }),
        config,
        trace,
        final_iterate: state.w,
        final_objective,
        passes,
    })
}
