use alloc::vec;
use alloc::vec::Vec;

use super::{applied_thresholds, checked_objective, prepare, CoordinateState, IterationRecord, NoisePlan, OptimizerConfig, OptimizerRun};
use crate::accountant::NoiseCalibration;
use crate::error::{invalid, Error, Result};
use crate::mechanisms::{report_noisy_argmax, NoiseRng};
use crate::optimizers::{Algorithm, GreedyRule};
use crate::problem::{soft_threshold, Problem};

fn check_calibration(problem: &Problem, calibration: &NoiseCalibration) -> Result<()> {
    let p = problem.p();
    for len in [calibration.release_scales.len(), calibration.selection_scales.len()] {
        if len != p {
            return Err(Error::DimensionMismatch { expected: p, found: len });
        }
    }
    let ok = |s: &f64| *s >= 0.0 && s.is_finite();
    if !calibration.release_scales.iter().all(ok) || !calibration.selection_scales.iter().all(ok) {
        return Err(invalid("calibration", "noise scales must be finite and nonnegative"));
    }
    Ok(())
}

/// Private greedy coordinate descent on a smooth objective.
///
/// Each iteration picks `j_t = argmax_j |∇_j f(w^t) + χ_j| / sqrt(M_j)` with
/// `χ_j ~ Lap(λ'_j)` and steps `w_j -= γ/M_j (∇_j f(w^t) + η)` with
/// `η ~ Lap(λ_j)`. Gradients average per-record coordinate gradients
/// clipped at the configured thresholds.
pub fn run_dp_gcd(
    problem: &Problem,
    config: &OptimizerConfig,
    calibration: &NoiseCalibration,
    rng: &mut NoiseRng,
) -> Result<OptimizerRun> {
    if config.algorithm != Algorithm::DpGcd {
        return Err(invalid("algorithm", "expected dp-gcd"));
    }
    greedy_loop(problem, config, calibration, rng, None)
}

/// Proximal greedy coordinate descent for `f + λ‖·‖₁`.
///
/// Selection scores come from the configured rule evaluated on the noisy
/// gradient `∇_j f(w^t) + χ_j`; the update applies the coordinate prox to a
/// step taken with fresh release noise.
pub fn run_dp_gcd_proximal(
    problem: &Problem,
    config: &OptimizerConfig,
    calibration: &NoiseCalibration,
    rng: &mut NoiseRng,
) -> Result<OptimizerRun> {
    let Algorithm::DpGcdProximal(rule) = config.algorithm else {
        return Err(invalid("algorithm", "expected a proximal greedy rule"));
    };
    greedy_loop(problem, config, calibration, rng, Some(rule))
}

fn greedy_loop(
    problem: &Problem,
    config: &OptimizerConfig,
    calibration: &NoiseCalibration,
    rng: &mut NoiseRng,
    rule: Option<GreedyRule>,
) -> Result<OptimizerRun> {
    let config = prepare(problem, config)?;
    check_calibration(problem, calibration)?;
    let p = problem.p();
    let m = problem.smoothness();
    let thresholds = applied_thresholds(problem, config.clipping_factor);
    let l1 = problem.regularizer().l1_strength();
    let gamma = config.step_factor;
    let total = config.iterations;

    let mut state = CoordinateState::zero(problem);
    let mut grad = vec![0.0; p];
    let mut scores = vec![0.0; p];
    let mut trace = Vec::with_capacity(total);

    for t in 0..total {
        problem.clipped_gradient_at(&state.w, &state.z, &thresholds, &mut grad);
        let (j, selection_noise) = match rule {
            None => {
                let pick = report_noisy_argmax(&grad, &calibration.selection_scales, m, rng)?;
                (pick.index, pick.noise)
            }
            Some(rule) => {
                let noise: Vec<f64> = calibration.selection_scales.iter().map(|s| rng.laplace(*s)).collect();
                for k in 0..p {
                    scores[k] = rule.score(grad[k] + noise[k], state.w[k], m[k], l1);
                }
                (argmax_first(&scores), noise)
            }
        };
        let eta = rng.laplace(calibration.release_scales[j]);
        let step = gamma / m[j];
        let target = state.w[j] - step * (grad[j] + eta);
        let value = match rule {
            None => target,
            Some(_) => soft_threshold(target, step * l1),
        };
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
            gradient: grad[j],
            release_noise: eta,
            selection_noise: if config.record_noise { selection_noise } else { Vec::new() },
            objective,
        });
    }

    let final_objective = checked_objective(problem.objective_at(&state.w, &state.z), total)?;
    let passes = config.passes(problem);
    Ok(OptimizerRun {
        noise: NoisePlan::Laplace(calibration.clone()),
        config,
        trace,
        final_iterate: state.w,
        final_objective,
        passes,
    })
}

/// Index of the largest value, lowest index on ties.
fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (j, v) in values.iter().enumerate() {
        if *v > best_val {
            best_val = *v;
            best = j;
        }
    }
    best
}
