use alloc::vec;
use alloc::vec::Vec;

use libm::{floor, log, log1p, sqrt};

use super::{checked_objective, prepare, IterationRecord, NoisePlan, OptimizerConfig, OptimizerRun};
use crate::accountant::GaussianCalibration;
use crate::error::{invalid, Error, Result};
use crate::mechanisms::NoiseRng;
use crate::optimizers::Algorithm;
use crate::problem::{dot, soft_threshold, Problem};

/// Poisson sample of `0..n` at rate `q`, by geometric skips.
pub(crate) fn poisson_sample(n: usize, q: f64, rng: &mut NoiseRng, out: &mut Vec<usize>) {
    out.clear();
    if q >= 1.0 {
        out.extend(0..n);
        return;
    }
    let log_keep = log1p(-q);
    let mut i = 0usize;
    loop {
        let skip = floor(log(rng.uniform_open()) / log_keep);
        if skip >= (n - i) as f64 {
            return;
        }
        i += skip as usize;
        out.push(i);
        i += 1;
        if i >= n {
            return;
        }
    }
}

/// Private SGD with Poisson subsampling at rate `batch_size / n`.
///
/// Per-record gradients of the loss are clipped to Euclidean norm `C`,
/// summed, perturbed with `N(0, std² I)` and divided by the expected batch
/// size; the L2 term is added exactly and L1 is handled by a full prox step.
pub fn run_dp_sgd(problem: &Problem, config: &OptimizerConfig, std: f64, rng: &mut NoiseRng) -> Result<OptimizerRun> {
    if config.algorithm != Algorithm::DpSgd {
        return Err(invalid("algorithm", "expected dp-sgd"));
    }
    if !(std >= 0.0 && std.is_finite()) {
        return Err(invalid("std", "must be finite and nonnegative"));
    }
    let config = prepare(problem, config)?;
    let (n, p) = (problem.n(), problem.p());
    let data = problem.data();
    let batch = config.batch_size.min(n);
    let q = batch as f64 / n as f64;
    let scale = 1.0 / (q * n as f64);
    let clip = config.clipping_factor;
    let l2 = problem.regularizer().l2_strength();
    let l1 = problem.regularizer().l1_strength();
    let gamma = config.step_factor;
    let total = config.iterations;

    let mut w = vec![0.0; p];
    let mut sum = vec![0.0; p];
    let mut noise = vec![0.0; p];
    let mut sample = Vec::with_capacity(2 * batch + 8);
    let mut trace = Vec::with_capacity(total);
    for t in 0..total {
        poisson_sample(n, q, rng, &mut sample);
        sum.iter_mut().for_each(|v| *v = 0.0);
        for &i in &sample {
            let row = data.row(i);
            let d = problem.record_derivative(dot(row, &w), i);
            if d == 0.0 {
                continue;
            }
            let mut factor = d;
            if clip.is_finite() {
                let norm = d.abs() * sqrt(dot(row, row));
                if norm > clip {
                    factor *= clip / norm;
                }
            }
            for (s, x) in sum.iter_mut().zip(row) {
                *s += factor * x;
            }
        }
        for v in noise.iter_mut() {
            *v = rng.gaussian(std);
        }
        let mut grad_sq = 0.0;
        let mut noise_sq = 0.0;
        for j in 0..p {
            let g = sum[j] * scale + l2 * w[j];
            let e = noise[j] * scale;
            grad_sq += g * g;
            noise_sq += e * e;
            let mut value = w[j] - gamma * (g + e);
            if l1 > 0.0 {
                value = soft_threshold(value, gamma * l1);
            }
            w[j] = value;
        }
        if !w.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged { iteration: t });
        }
        let objective = if config.recording.wants(t + 1, total) {
            Some(checked_objective(problem.objective(&w).unwrap_or(f64::INFINITY), t)?)
        } else {
            None
        };
        trace.push(IterationRecord {
            t,
            coordinate: None,
            gradient: sqrt(grad_sq),
            release_noise: sqrt(noise_sq),
            selection_noise: Vec::new(),
            objective,
        });
    }

    let final_objective = checked_objective(problem.objective(&w).unwrap_or(f64::INFINITY), total)?;
    let passes = config.passes(problem);
    Ok(OptimizerRun {
        noise: NoisePlan::Gaussian(GaussianCalibration {
            noise_multiplier: 0.0,
            stds: vec![std],
            iterations: total,
        }),
        config,
        trace,
        final_iterate: w,
        final_objective,
        passes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Dataset, LossKind, Regularizer};

    fn regression(seed: u64, n: usize, p: usize) -> Problem {
        let mut rng = NoiseRng::new(seed);
        let x: Vec<f64> = (0..n * p).map(|_| rng.gaussian(1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gaussian(1.0)).collect();
        Problem::new(Dataset::from_rows("r", n, p, x, y).unwrap(), LossKind::SquaredError, Regularizer::l2(0.1).unwrap())
            .unwrap()
    }

    #[test]
    fn full_batch_noiseless_is_gradient_descent() {
        let prob = regression(1, 30, 4);
        let gamma = 0.1;
        let cfg = OptimizerConfig::new(Algorithm::DpSgd, 50).batch_size(30).step_factor(gamma);
        let run = run_dp_sgd(&prob, &cfg, 0.0, &mut NoiseRng::new(0)).unwrap();
        let mut w = vec![0.0; 4];
        for (t, r) in run.trace.iter().enumerate() {
            let g = prob.gradient(&w).unwrap();
            for j in 0..4 {
                w[j] -= gamma * g[j];
            }
            let f = prob.objective(&w).unwrap();
            assert!((r.objective.unwrap() - f).abs() <= 1e-12 * f.abs().max(1.0), "t={t}");
        }
        for j in 0..4 {
            assert!((w[j] - run.final_iterate[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn infinite_clip_on_bounded_logistic_is_exact() {
        let mut rng = NoiseRng::new(2);
        let x: Vec<f64> = (0..40).map(|_| rng.uniform_open() - 0.5).collect();
        let y: Vec<f64> = (0..20).map(|i| if i % 3 == 0 { 1.0 } else { -1.0 }).collect();
        let prob = Problem::new(Dataset::from_rows("b", 20, 2, x, y).unwrap(), LossKind::Logistic, Regularizer::NONE)
            .unwrap();
        let cfg = OptimizerConfig::new(Algorithm::DpSgd, 5).batch_size(20);
        let a = run_dp_sgd(&prob, &cfg, 0.0, &mut NoiseRng::new(0)).unwrap();
        let b = run_dp_sgd(&prob, &cfg.clone().clipping_factor(1e6), 0.0, &mut NoiseRng::new(0)).unwrap();
        assert_eq!(a.final_iterate, b.final_iterate);
    }

    #[test]
    fn poisson_sample_rate() {
        let mut rng = NoiseRng::new(3);
        let mut out = Vec::new();
        let mut total = 0usize;
        let trials = 20_000;
        for _ in 0..trials {
            poisson_sample(100, 0.05, &mut rng, &mut out);
            assert!(out.windows(2).all(|w| w[0] < w[1]));
            assert!(out.iter().all(|i| *i < 100));
            total += out.len();
        }
        let mean = total as f64 / trials as f64;
        assert!((mean - 5.0).abs() < 0.1, "{mean}");
        poisson_sample(7, 1.0, &mut rng, &mut out);
        assert_eq!(out, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn inclusion_is_uniform_over_records() {
        let mut rng = NoiseRng::new(4);
        let mut out = Vec::new();
        let mut counts = [0usize; 10];
        for _ in 0..50_000 {
            poisson_sample(10, 0.1, &mut rng, &mut out);
            for i in &out {
                counts[*i] += 1;
            }
        }
        let sd = libm::sqrt(50_000.0 * 0.1 * 0.9);
        for c in counts {
            assert!((c as f64 - 5000.0).abs() < 4.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn passes_at_batch_one() {
        let prob = regression(5, 50, 3);
        let cfg = OptimizerConfig::new(Algorithm::DpSgd, 50).step_factor(0.01);
        let run = run_dp_sgd(&prob, &cfg, 0.1, &mut NoiseRng::new(1)).unwrap();
        assert_eq!(run.passes, 1.0);
        assert_eq!(run.trace.len(), 50);
        assert!(run.trace.iter().all(|r| r.coordinate.is_none()));
    }
}
