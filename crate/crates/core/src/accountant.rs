//! Privacy calibration.
//!
//! Greedy CD composes `2T` pure-DP Laplace mechanisms (one noisy argmax and
//! one gradient release per iteration) through advanced composition. The
//! Gaussian baselines are accounted with Rényi DP: plain Gaussian releases
//! for coordinate descent, Poisson-subsampled Gaussian releases for SGD.

use alloc::vec::Vec;

use libm::{exp, expm1, log, log1p, sqrt};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(invalid("epsilon", "must be positive and finite"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid("delta", "must lie in (0, 1)"));
        }
        Ok(Self { epsilon, delta })
    }

    /// `(epsilon, 1/n²)`.
    pub fn with_inverse_square_delta(epsilon: f64, n: usize) -> Result<Self> {
        let n = n as f64;
        Self::new(epsilon, 1.0 / (n * n))
    }
}

/// Laplace noise scales for greedy CD.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCalibration {
    /// `λ_j`, noise on the released gradient coordinate.
    pub release_scales: Vec<f64>,
    /// `λ'_j`, noise on the selection scores.
    pub selection_scales: Vec<f64>,
    /// `ε'` spent by each of the `2T` mechanisms.
    pub per_step_epsilon: f64,
    pub iterations: usize,
}

impl NoiseCalibration {
    /// All-zero scales: the run is exact (and not private).
    pub fn noiseless(p: usize, iterations: usize) -> Self {
        Self {
            release_scales: alloc::vec![0.0; p],
            selection_scales: alloc::vec![0.0; p],
            per_step_epsilon: f64::INFINITY,
            iterations,
        }
    }

    fn from_step_epsilon(step: f64, iterations: usize, lipschitz: &[f64], n: usize) -> Self {
        let scales: Vec<f64> = lipschitz.iter().map(|l| 2.0 * l / (n as f64 * step)).collect();
        Self {
            release_scales: scales.clone(),
            selection_scales: scales,
            per_step_epsilon: step,
            iterations,
        }
    }
}

fn check_gcd_inputs(iterations: usize, lipschitz: &[f64], n: usize) -> Result<()> {
    if iterations == 0 {
        return Err(invalid("iterations", "must be at least 1"));
    }
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    if lipschitz.is_empty() {
        return Err(Error::EmptyInput("lipschitz constants"));
    }
    // a zero constant (feature identically zero) needs no noise
    if lipschitz.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
        return Err(invalid("lipschitz", "must be finite and nonnegative"));
    }
    Ok(())
}

/// `ε` of the `2T`-fold advanced composition of `ε'`-DP mechanisms:
/// `sqrt(4T log(1/δ)) ε' + 2T ε' (exp(ε') - 1)`.
pub fn advanced_composition_epsilon(step_epsilon: f64, iterations: usize, delta: f64) -> f64 {
    let t = iterations as f64;
    sqrt(4.0 * t * log(1.0 / delta)) * step_epsilon + 2.0 * t * step_epsilon * expm1(step_epsilon)
}

/// Closed-form scales `λ_j = λ'_j = 8 L_j sqrt(T log(1/δ)) / (n ε)`, valid
/// for `ε ≤ 1`.
pub fn calibrate_gcd_closed_form(
    budget: PrivacyBudget,
    iterations: usize,
    lipschitz: &[f64],
    n: usize,
) -> Result<NoiseCalibration> {
    if budget.epsilon > 1.0 {
        return Err(invalid("epsilon", "closed form requires epsilon <= 1"));
    }
    check_gcd_inputs(iterations, lipschitz, n)?;
    let step = budget.epsilon / (4.0 * sqrt(iterations as f64 * log(1.0 / budget.delta)));
    Ok(NoiseCalibration::from_step_epsilon(step, iterations, lipschitz, n))
}

/// Tightest per-step `ε'` under advanced composition, found by bisection.
pub fn gcd_step_epsilon(budget: PrivacyBudget, iterations: usize) -> Result<f64> {
    if iterations == 0 {
        return Err(invalid("iterations", "must be at least 1"));
    }
    let target = budget.epsilon;
    let eval = |x: f64| advanced_composition_epsilon(x, iterations, budget.delta);
    let (mut lo, mut hi) = (1e-12, 1e3);
    if !(eval(lo) <= target && eval(hi) >= target) {
        return Err(Error::NoBracket { what: "per-step epsilon" });
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if eval(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(lo)
}

/// Numerically tight scales `λ_j = λ'_j = 2 L_j / (n ε')` for any `ε > 0`.
pub fn calibrate_gcd_numeric(
    budget: PrivacyBudget,
    iterations: usize,
    lipschitz: &[f64],
    n: usize,
) -> Result<NoiseCalibration> {
    check_gcd_inputs(iterations, lipschitz, n)?;
    let step = gcd_step_epsilon(budget, iterations)?;
    Ok(NoiseCalibration::from_step_epsilon(step, iterations, lipschitz, n))
}

/// RDP of the Gaussian mechanism: `α Δ² / (2σ²)`.
pub fn rdp_gaussian(std: f64, sensitivity: f64, order: f64) -> Result<f64> {
    if !(std > 0.0) {
        return Err(invalid("std", "must be positive"));
    }
    if !(order > 1.0) {
        return Err(invalid("order", "must exceed 1"));
    }
    Ok(order * sensitivity * sensitivity / (2.0 * std * std))
}

/// RDP of the Poisson-subsampled Gaussian mechanism at integer order `α ≥ 2`:
/// `1/(α-1) log Σ_k C(α,k) (1-q)^{α-k} q^k exp(k(k-1)Δ²/(2σ²))`,
/// evaluated in log space.
pub fn rdp_subsampled_gaussian(std: f64, sensitivity: f64, sampling_rate: f64, order: u32) -> Result<f64> {
    if !(std > 0.0) {
        return Err(invalid("std", "must be positive"));
    }
    if order < 2 {
        return Err(invalid("order", "must be an integer >= 2"));
    }
    if !(sampling_rate > 0.0 && sampling_rate <= 1.0) {
        return Err(invalid("sampling_rate", "must lie in (0, 1]"));
    }
    let alpha = order as f64;
    if sampling_rate == 1.0 {
        return rdp_gaussian(std, sensitivity, alpha);
    }
    let ln_q = log(sampling_rate);
    let ln_1mq = log1p(-sampling_rate);
    let c = sensitivity * sensitivity / (2.0 * std * std);
    let mut ln_binom = 0.0;
    let mut terms = Vec::with_capacity(order as usize + 1);
    for k in 0..=order {
        let kf = k as f64;
        if k > 0 {
            ln_binom += log(alpha - kf + 1.0) - log(kf);
        }
        terms.push(ln_binom + (alpha - kf) * ln_1mq + kf * ln_q + kf * (kf - 1.0) * c);
    }
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| exp(t - max)).sum();
    Ok(((max + log(sum)) / (alpha - 1.0)).max(0.0))
}

/// Default Rényi orders: integers 2..=64, then log-spaced up to 512.
pub fn default_orders() -> Vec<f64> {
    let mut orders: Vec<f64> = (2..=64).map(|a| a as f64).collect();
    for k in 1..=12 {
        orders.push(64.0 * libm::pow(2.0, k as f64 / 4.0));
    }
    orders
}

/// Cumulative RDP `ρ(α)` on a finite grid of orders.
#[derive(Debug, Clone, PartialEq)]
pub struct RdpCurve {
    pub orders: Vec<f64>,
    pub rho: Vec<f64>,
    pub sampling_rate: f64,
}

impl RdpCurve {
    pub fn gaussian(std: f64, sensitivity: f64) -> Result<Self> {
        let orders = default_orders();
        let rho = orders
            .iter()
            .map(|a| rdp_gaussian(std, sensitivity, *a))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            orders,
            rho,
            sampling_rate: 1.0,
        })
    }

    /// Subsampled bound at the integer orders up to 64; the plain Gaussian
    /// bound (which subsampling never exceeds) on the extension beyond.
    pub fn subsampled_gaussian(std: f64, sensitivity: f64, sampling_rate: f64) -> Result<Self> {
        let orders = default_orders();
        let rho = orders
            .iter()
            .map(|a| {
                if *a <= 64.0 && libm::trunc(*a) == *a {
                    rdp_subsampled_gaussian(std, sensitivity, sampling_rate, *a as u32)
                } else {
                    rdp_gaussian(std, sensitivity, *a)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            orders,
            rho,
            sampling_rate,
        })
    }

    /// `steps`-fold self composition.
    pub fn compose(&self, steps: usize) -> Self {
        Self {
            orders: self.orders.clone(),
            rho: self.rho.iter().map(|r| r * steps as f64).collect(),
            sampling_rate: self.sampling_rate,
        }
    }

    /// Sequential composition with another curve on the same grid.
    pub fn then(&self, other: &Self) -> Result<Self> {
        if self.orders != other.orders {
            return Err(invalid("orders", "curves use different order grids"));
        }
        Ok(Self {
            orders: self.orders.clone(),
            rho: self.rho.iter().zip(&other.rho).map(|(a, b)| a + b).collect(),
            sampling_rate: self.sampling_rate,
        })
    }
}

/// `min_α ρ(α) + log(1/δ)/(α-1)`.
pub fn rdp_to_dp(curve: &RdpCurve, delta: f64) -> Result<f64> {
    if curve.orders.is_empty() {
        return Err(Error::EmptyInput("rdp orders"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", "must lie in (0, 1)"));
    }
    let ln_inv_delta = log(1.0 / delta);
    Ok(curve
        .orders
        .iter()
        .zip(&curve.rho)
        .map(|(a, r)| r + ln_inv_delta / (a - 1.0))
        .fold(f64::INFINITY, f64::min))
}

/// Gaussian baselines accounted with RDP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    /// One full-batch coordinate gradient released per iteration.
    CoordinateDescent,
    /// One Poisson-subsampled sum of clipped per-record gradients per
    /// iteration, sampling rate `batch_size / n`.
    Sgd { batch_size: usize },
}

/// Gaussian noise calibration: `stds_j = noise_multiplier · sensitivity_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCalibration {
    pub noise_multiplier: f64,
    pub stds: Vec<f64>,
    pub iterations: usize,
}

fn baseline_curve(baseline: Baseline, multiplier: f64, n: usize) -> Result<RdpCurve> {
    match baseline {
        Baseline::CoordinateDescent => RdpCurve::gaussian(multiplier, 1.0),
        Baseline::Sgd { batch_size } => {
            let q = (batch_size as f64 / n as f64).min(1.0);
            RdpCurve::subsampled_gaussian(multiplier, 1.0, q)
        }
    }
}

/// `ε` spent by `iterations` releases at the given noise multiplier.
pub fn baseline_epsilon(baseline: Baseline, multiplier: f64, iterations: usize, n: usize, delta: f64) -> Result<f64> {
    let curve = baseline_curve(baseline, multiplier, n)?.compose(iterations);
    rdp_to_dp(&curve, delta)
}

/// Smallest noise multiplier (std / sensitivity) meeting the budget.
pub fn calibrate_noise_multiplier(
    baseline: Baseline,
    budget: PrivacyBudget,
    iterations: usize,
    n: usize,
) -> Result<f64> {
    if iterations == 0 {
        return Err(invalid("iterations", "must be at least 1"));
    }
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    if let Baseline::Sgd { batch_size: 0 } = baseline {
        return Err(invalid("batch_size", "must be at least 1"));
    }
    let eps = |k: f64| baseline_epsilon(baseline, k, iterations, n, budget.delta);
    let target = budget.epsilon;
    let (mut lo, mut hi) = (1.0, 1.0);
    while eps(lo)? <= target {
        lo *= 0.5;
        if lo < 1e-8 {
            return Err(Error::NoBracket { what: "noise multiplier" });
        }
    }
    while eps(hi)? > target {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::NoBracket { what: "noise multiplier" });
        }
    }
    while hi / lo - 1.0 > 1e-12 {
        let mid = sqrt(lo * hi);
        if eps(mid)? <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

pub fn calibrate_baseline(
    baseline: Baseline,
    budget: PrivacyBudget,
    iterations: usize,
    sensitivities: &[f64],
    n: usize,
) -> Result<GaussianCalibration> {
    if sensitivities.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(invalid("sensitivities", "must be finite and nonnegative"));
    }
    let k = calibrate_noise_multiplier(baseline, budget, iterations, n)?;
    Ok(GaussianCalibration {
        noise_multiplier: k,
        stds: sensitivities.iter().map(|s| k * s).collect(),
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn closed_form_examples() {
        let b = PrivacyBudget::new(1.0, 1e-6).unwrap();
        let c = calibrate_gcd_closed_form(b, 100, &[1.0], 1000).unwrap();
        assert!((c.release_scales[0] - 0.29735).abs() < 1e-4);
        assert_eq!(c.release_scales, c.selection_scales);
        let c2 = calibrate_gcd_closed_form(b, 100, &[1.0], 2000).unwrap();
        assert_eq!(c2.release_scales[0], c.release_scales[0] / 2.0);

        let b = PrivacyBudget::new(1.0, (-1.0f64).exp()).unwrap();
        let c = calibrate_gcd_closed_form(b, 1, &[1.0], 8).unwrap();
        assert!((c.release_scales[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn closed_form_errors() {
        let b = PrivacyBudget::new(2.0, 1e-6).unwrap();
        assert!(calibrate_gcd_closed_form(b, 10, &[1.0], 10).is_err());
        let b = PrivacyBudget::new(0.5, 1e-6).unwrap();
        assert!(calibrate_gcd_closed_form(b, 0, &[1.0], 10).is_err());
        assert!(calibrate_gcd_closed_form(b, 10, &[-1.0], 10).is_err());
        assert!(calibrate_gcd_closed_form(b, 10, &[f64::INFINITY], 10).is_err());
        assert!(PrivacyBudget::new(0.0, 0.1).is_err());
        assert!(PrivacyBudget::new(1.0, 1.0).is_err());
        assert!(PrivacyBudget::new(1.0, 0.0).is_err());
    }

    #[test]
    fn numeric_round_trip_and_tightness() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let eps = 10f64.powf(rng.random_range(-2.0..1.0));
            let delta = 10f64.powf(rng.random_range(-10.0..-3.0));
            let t = rng.random_range(1..2000);
            let b = PrivacyBudget::new(eps, delta).unwrap();
            let step = gcd_step_epsilon(b, t).unwrap();
            let back = advanced_composition_epsilon(step, t, delta);
            assert!(((back - eps) / eps).abs() < 1e-9, "{eps} {delta} {t}: {back}");
            if eps <= 1.0 {
                let num = calibrate_gcd_numeric(b, t, &[1.0, 2.5], 100).unwrap();
                let cf = calibrate_gcd_closed_form(b, t, &[1.0, 2.5], 100).unwrap();
                for (a, c) in num.release_scales.iter().zip(&cf.release_scales) {
                    assert!(a <= c);
                }
            }
        }
    }

    #[test]
    fn numeric_root_example() {
        let b = PrivacyBudget::new(1.0, 1e-5).unwrap();
        let x = gcd_step_epsilon(b, 10).unwrap();
        let residual = (40.0 * (1e5f64).ln()).sqrt() * x + 20.0 * x * (x.exp() - 1.0) - 1.0;
        assert!(residual.abs() < 1e-9);
    }

    #[test]
    fn gcd_calibration_is_monotone() {
        let scale = |eps: f64, t: usize| {
            calibrate_gcd_numeric(PrivacyBudget::new(eps, 1e-6).unwrap(), t, &[1.0], 1000)
                .unwrap()
                .release_scales[0]
        };
        assert!(scale(2.0, 50) < scale(1.0, 50));
        assert!(scale(1.0, 100) > scale(1.0, 50));
    }

    #[test]
    fn rdp_gaussian_examples() {
        assert_eq!(rdp_gaussian(1.0, 1.0, 2.0).unwrap(), 1.0);
        assert_eq!(rdp_gaussian(2.0, 2.0, 4.0).unwrap(), 2.0);
        assert!(rdp_gaussian(1.0, 1.0, 1.0).is_err());
        let c = RdpCurve::gaussian(3.0, 1.0).unwrap();
        let c7 = c.compose(7);
        for (a, b) in c.rho.iter().zip(&c7.rho) {
            assert_eq!(*b, 7.0 * a);
        }
        assert!(c.rho.iter().all(|r| *r >= 0.0));
    }

    fn brute_force_subsampled(std: f64, sens: f64, q: f64, alpha: u32) -> f64 {
        let a = alpha as f64;
        let mut sum = 0.0;
        let mut binom = 1.0;
        for k in 0..=alpha {
            let kf = k as f64;
            if k > 0 {
                binom = binom * (a - kf + 1.0) / kf;
            }
            sum += binom * (1.0 - q).powf(a - kf) * q.powf(kf) * (kf * (kf - 1.0) * sens * sens / (2.0 * std * std)).exp();
        }
        sum.ln() / (a - 1.0)
    }

    #[test]
    fn subsampled_matches_direct_summation() {
        let rho = rdp_subsampled_gaussian(1.0, 1.0, 0.01, 2).unwrap();
        let direct = (0.99f64 * 0.99 + 2.0 * 0.99 * 0.01 + 0.01 * 0.01 * 1f64.exp()).ln();
        assert!((rho - direct).abs() < 1e-15);
        for (std, q, a) in [(1.0, 0.01, 5), (2.0, 0.1, 12), (0.8, 0.001, 30), (4.0, 0.5, 64)] {
            let r = rdp_subsampled_gaussian(std, 1.0, q, a).unwrap();
            let b = brute_force_subsampled(std, 1.0, q, a);
            assert!((r - b).abs() <= 1e-10 * b.abs().max(1e-10), "{std} {q} {a}: {r} vs {b}");
        }
    }

    #[test]
    fn subsampled_limits() {
        for a in [2u32, 5, 17] {
            let full = rdp_subsampled_gaussian(1.5, 1.0, 1.0, a).unwrap();
            assert_eq!(full, rdp_gaussian(1.5, 1.0, a as f64).unwrap());
            let tiny = rdp_subsampled_gaussian(1.5, 1.0, 1e-9, a).unwrap();
            assert!(tiny < 1e-12);
            let mid = rdp_subsampled_gaussian(1.5, 1.0, 0.3, a).unwrap();
            assert!(mid <= full);
        }
        assert!(rdp_subsampled_gaussian(1.0, 1.0, 0.0, 2).is_err());
        assert!(rdp_subsampled_gaussian(1.0, 1.0, 1.5, 2).is_err());
        assert!(rdp_subsampled_gaussian(1.0, 1.0, 0.5, 1).is_err());
    }

    #[test]
    fn conversion_examples() {
        let c = RdpCurve {
            orders: alloc::vec![2.0],
            rho: alloc::vec![0.0],
            sampling_rate: 1.0,
        };
        assert!((rdp_to_dp(&c, 1e-5).unwrap() - (1e5f64).ln()).abs() < 1e-12);
        let c = RdpCurve {
            orders: alloc::vec![2.0, 10.0, 100.0],
            rho: alloc::vec![0.3; 3],
            sampling_rate: 1.0,
        };
        let eps = rdp_to_dp(&c, 1e-5).unwrap();
        assert_eq!(eps, 0.3 + (1e5f64).ln() / 99.0);
        let empty = RdpCurve {
            orders: alloc::vec![],
            rho: alloc::vec![],
            sampling_rate: 1.0,
        };
        assert!(rdp_to_dp(&empty, 1e-5).is_err());
    }

    #[test]
    fn conversion_monotonicity() {
        let c = RdpCurve::gaussian(5.0, 1.0).unwrap().compose(10);
        let bigger = RdpCurve::gaussian(4.0, 1.0).unwrap().compose(10);
        let mut last = f64::INFINITY;
        for delta in [1e-9, 1e-7, 1e-5, 1e-3, 0.1] {
            let e = rdp_to_dp(&c, delta).unwrap();
            assert!(e <= last);
            last = e;
            assert!(rdp_to_dp(&bigger, delta).unwrap() >= e);
        }
    }

    #[test]
    fn baseline_calibration_round_trip() {
        for baseline in [Baseline::CoordinateDescent, Baseline::Sgd { batch_size: 1 }, Baseline::Sgd { batch_size: 64 }] {
            let b = PrivacyBudget::new(1.0, 1e-6).unwrap();
            let cal = calibrate_baseline(baseline, b, 500, &[0.002, 0.004], 1000).unwrap();
            let eps = baseline_epsilon(baseline, cal.noise_multiplier, 500, 1000, 1e-6).unwrap();
            assert!(eps <= 1.0);
            assert!(((eps - 1.0) / 1.0).abs() < 1e-6, "{baseline:?}: {eps}");
            assert_eq!(cal.stds[1], 2.0 * cal.stds[0]);

            let half = calibrate_noise_multiplier(baseline, PrivacyBudget::new(0.5, 1e-6).unwrap(), 500, 1000).unwrap();
            assert!(half > cal.noise_multiplier);
            let longer = calibrate_noise_multiplier(baseline, b, 1000, 1000).unwrap();
            assert!(longer > cal.noise_multiplier);
        }
        let b = PrivacyBudget::new(1.0, 1e-6).unwrap();
        assert!(calibrate_baseline(Baseline::CoordinateDescent, b, 0, &[1.0], 10).is_err());
    }

    #[test]
    fn gaussian_std_for_unit_epsilon() {
        // single release with sensitivity 1 calibrated to ε = 1 at δ = 1e-6
        let b = PrivacyBudget::new(1.0, 1e-6).unwrap();
        let k = calibrate_noise_multiplier(Baseline::CoordinateDescent, b, 1, 10).unwrap();
        let eps = rdp_to_dp(&RdpCurve::gaussian(k, 1.0).unwrap(), 1e-6).unwrap();
        assert!((eps - 1.0).abs() < 1e-6);
        assert!(eps <= 1.0);
    }
}
