//! Private optimizers and the noiseless reference solver.
//!
//! Every private run starts from `w⁰ = 0`, keeps the margins `X w` up to
//! date incrementally and records one [`IterationRecord`] per iteration.

mod cd;
mod gcd;
mod reference;
mod sgd;

use alloc::vec::Vec;

use crate::accountant::{
    calibrate_baseline, calibrate_gcd_numeric, calibrate_noise_multiplier, gcd_step_epsilon, Baseline,
    GaussianCalibration, NoiseCalibration, PrivacyBudget,
};
use crate::error::{invalid, Error, Result};
use crate::mechanisms::NoiseRng;
use crate::problem::{Problem, RegularizerKind, WeightVector};

pub use cd::run_dp_cd;
pub use gcd::{run_dp_gcd, run_dp_gcd_proximal};
pub use reference::{solve_reference, solve_reference_with_cap, ReferenceSolution, DEFAULT_STEP_CAP};
pub use sgd::run_dp_sgd;

/// Greedy selection rules for composite objectives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GreedyRule {
    /// Minimal-norm subgradient.
    GsS,
    /// Length of the proximal step.
    GsR,
    /// Decrease of the proximal quadratic model.
    GsQ,
}

impl GreedyRule {
    pub const ALL: [GreedyRule; 3] = [GreedyRule::GsS, GreedyRule::GsR, GreedyRule::GsQ];

    pub fn name(self) -> &'static str {
        match self {
            GreedyRule::GsS => "gs-s",
            GreedyRule::GsR => "gs-r",
            GreedyRule::GsQ => "gs-q",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gs-s" => Some(GreedyRule::GsS),
            "gs-r" => Some(GreedyRule::GsR),
            "gs-q" => Some(GreedyRule::GsQ),
            _ => None,
        }
    }

    /// Score of coordinate `j` for `ψ_j = l1 |·|`, given the (noisy)
    /// gradient entry `g`, the current value `w` and smoothness `m`.
    /// Larger is better; every score is nonnegative.
    pub fn score(self, g: f64, w: f64, m: f64, l1: f64) -> f64 {
        match self {
            GreedyRule::GsS => {
                let s = if w != 0.0 {
                    (g + l1 * w.signum()).abs()
                } else {
                    (g.abs() - l1).max(0.0)
                };
                s / libm::sqrt(m)
            }
            GreedyRule::GsR => libm::sqrt(m) * prox_step(g, w, m, l1).abs(),
            GreedyRule::GsQ => {
                let a = prox_step(g, w, m, l1);
                let decrease = g * a + 0.5 * m * a * a + l1 * ((w + a).abs() - w.abs());
                (-decrease).max(0.0)
            }
        }
    }
}

/// `prox_{ψ/m}(w - g/m) - w` for `ψ = l1 |·|`, written so that `l1 = 0`
/// gives exactly `-g/m`.
#[inline]
pub(crate) fn prox_step(g: f64, w: f64, m: f64, l1: f64) -> f64 {
    let u = w - g / m;
    let thr = l1 / m;
    if u.abs() <= thr {
        -w
    } else {
        -g / m - u.signum() * thr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// Greedy CD with report-noisy-argmax selection.
    DpGcd,
    /// Proximal greedy CD for L1-regularized problems.
    DpGcdProximal(GreedyRule),
    /// Coordinate descent with uniformly random coordinates.
    DpCd,
    /// Poisson-subsampled SGD with per-record clipping.
    DpSgd,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::DpGcd => "dp-gcd",
            Algorithm::DpGcdProximal(GreedyRule::GsS) => "dp-gcd-gs-s",
            Algorithm::DpGcdProximal(GreedyRule::GsR) => "dp-gcd-gs-r",
            Algorithm::DpGcdProximal(GreedyRule::GsQ) => "dp-gcd-gs-q",
            Algorithm::DpCd => "dp-cd",
            Algorithm::DpSgd => "dp-sgd",
        }
    }

    pub fn is_greedy(self) -> bool {
        matches!(self, Algorithm::DpGcd | Algorithm::DpGcdProximal(_))
    }

    /// Iterations that amount to one pass over the data.
    pub fn iterations_per_pass(self, n: usize, p: usize, batch_size: usize) -> f64 {
        match self {
            Algorithm::DpGcd | Algorithm::DpGcdProximal(_) => 1.0,
            Algorithm::DpCd => p as f64,
            Algorithm::DpSgd => n as f64 / batch_size.min(n).max(1) as f64,
        }
    }
}

/// When to evaluate the objective during a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Recording {
    /// After every iteration.
    All,
    /// After the listed iteration counts (1-based); the last iteration is
    /// always evaluated.
    At(Vec<usize>),
}

impl Recording {
    fn wants(&self, done: usize, total: usize) -> bool {
        match self {
            Recording::All => true,
            Recording::At(points) => done == total || points.binary_search(&done).is_ok(),
        }
    }

    fn normalized(&self) -> Self {
        match self {
            Recording::All => Recording::All,
            Recording::At(points) => {
                let mut v = points.clone();
                v.sort_unstable();
                v.dedup();
                Recording::At(v)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub iterations: usize,
    /// `γ`: coordinate methods step with `γ / M_j`, SGD with `γ`.
    pub step_factor: f64,
    /// `c`: coordinate thresholds `c · sqrt(M_j / max M)`, or the SGD norm
    /// bound. `f64::INFINITY` disables clipping.
    pub clipping_factor: f64,
    pub seed: u64,
    /// Expected Poisson batch size (SGD only).
    pub batch_size: usize,
    pub recording: Recording,
    /// Keep the per-coordinate selection noise in the trace.
    pub record_noise: bool,
}

impl OptimizerConfig {
    pub fn new(algorithm: Algorithm, iterations: usize) -> Self {
        Self {
            algorithm,
            iterations,
            step_factor: 1.0,
            clipping_factor: f64::INFINITY,
            seed: 0,
            batch_size: 1,
            recording: Recording::All,
            record_noise: true,
        }
    }

    pub fn step_factor(mut self, gamma: f64) -> Self {
        self.step_factor = gamma;
        self
    }

    pub fn clipping_factor(mut self, c: f64) -> Self {
        self.clipping_factor = c;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn batch_size(mut self, b: usize) -> Self {
        self.batch_size = b;
        self
    }

    pub fn recording(mut self, r: Recording) -> Self {
        self.recording = r;
        self
    }

    pub fn record_noise(mut self, on: bool) -> Self {
        self.record_noise = on;
        self
    }

    /// Checks the configuration against the problem it will run on.
    pub fn validate(&self, problem: &Problem) -> Result<()> {
        if self.iterations == 0 {
            return Err(invalid("iterations", "must be at least 1"));
        }
        if !(self.step_factor > 0.0 && self.step_factor.is_finite()) {
            return Err(invalid("step_factor", "must be positive and finite"));
        }
        if !(self.clipping_factor > 0.0) {
            return Err(invalid("clipping_factor", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be at least 1"));
        }
        let l1 = problem.regularizer().kind == RegularizerKind::L1;
        match self.algorithm {
            Algorithm::DpGcd if l1 => Err(invalid(
                "algorithm",
                "greedy CD needs a smooth regularizer; use a proximal rule for L1",
            )),
            Algorithm::DpGcdProximal(_) if !l1 => {
                Err(invalid("rule", "proximal greedy rules require an L1 regularizer"))
            }
            _ => Ok(()),
        }
    }

    /// Data passes covered by the configured iteration count.
    pub fn passes(&self, problem: &Problem) -> f64 {
        self.iterations as f64
            / self
                .algorithm
                .iterations_per_pass(problem.n(), problem.p(), self.batch_size)
    }
}

/// One iteration of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub t: usize,
    /// Updated coordinate (`None` for SGD, which updates all of them).
    pub coordinate: Option<usize>,
    /// Gradient entry used by the update, after clipping and before noise
    /// (SGD: Euclidean norm of the averaged clipped gradient).
    pub gradient: f64,
    /// Noise added to the released gradient (SGD: Euclidean norm of the
    /// noise vector after averaging).
    pub release_noise: f64,
    /// Selection noise `χ^t` (greedy only, when recorded).
    pub selection_noise: Vec<f64>,
    /// `f(w^{t+1}) + ψ(w^{t+1})`, when recorded.
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerRun {
    pub config: OptimizerConfig,
    pub noise: NoisePlan,
    pub trace: Vec<IterationRecord>,
    pub final_iterate: WeightVector,
    pub final_objective: f64,
    pub passes: f64,
}

impl OptimizerRun {
    /// Coordinates chosen at each iteration (coordinate methods).
    pub fn coordinates(&self) -> Vec<usize> {
        self.trace.iter().filter_map(|r| r.coordinate).collect()
    }

    /// `(iterations done, objective)` at every recorded point.
    pub fn objective_curve(&self) -> Vec<(usize, f64)> {
        self.trace
            .iter()
            .filter_map(|r| r.objective.map(|f| (r.t + 1, f)))
            .collect()
    }
}

/// Noise attached to a run.
#[derive(Debug, Clone, PartialEq)]
pub enum NoisePlan {
    Laplace(NoiseCalibration),
    Gaussian(GaussianCalibration),
}

impl NoisePlan {
    /// Exact (non-private) run of the configured algorithm.
    pub fn noiseless(problem: &Problem, config: &OptimizerConfig) -> Self {
        let p = problem.p();
        if config.algorithm.is_greedy() {
            NoisePlan::Laplace(NoiseCalibration::noiseless(p, config.iterations))
        } else {
            let len = if config.algorithm == Algorithm::DpSgd { 1 } else { p };
            NoisePlan::Gaussian(GaussianCalibration {
                noise_multiplier: 0.0,
                stds: alloc::vec![0.0; len],
                iterations: config.iterations,
            })
        }
    }

    /// Calibrates noise for the configuration at the target budget.
    pub fn calibrate(problem: &Problem, config: &OptimizerConfig, budget: PrivacyBudget) -> Result<Self> {
        let n = problem.n();
        let t = config.iterations;
        match config.algorithm {
            Algorithm::DpGcd | Algorithm::DpGcdProximal(_) => {
                let l = coordinate_sensitivity_bounds(problem, config.clipping_factor)?;
                Ok(NoisePlan::Laplace(calibrate_gcd_numeric(budget, t, &l, n)?))
            }
            Algorithm::DpCd => {
                let sens = release_sensitivities(problem, config)?;
                Ok(NoisePlan::Gaussian(calibrate_baseline(Baseline::CoordinateDescent, budget, t, &sens, n)?))
            }
            Algorithm::DpSgd => {
                let sens = release_sensitivities(problem, config)?;
                let baseline = Baseline::Sgd {
                    batch_size: config.batch_size,
                };
                Ok(NoisePlan::Gaussian(calibrate_baseline(baseline, budget, t, &sens, n)?))
            }
        }
    }

    /// Budget-dependent unit that does not depend on clipping: `ε'` for
    /// greedy CD, the noise multiplier for the Gaussian baselines. Lets
    /// callers calibrate once per `(algorithm, T)`.
    pub fn unit(problem: &Problem, config: &OptimizerConfig, budget: PrivacyBudget) -> Result<f64> {
        let t = config.iterations;
        match config.algorithm {
            Algorithm::DpGcd | Algorithm::DpGcdProximal(_) => gcd_step_epsilon(budget, t),
            Algorithm::DpCd => calibrate_noise_multiplier(Baseline::CoordinateDescent, budget, t, problem.n()),
            Algorithm::DpSgd => calibrate_noise_multiplier(
                Baseline::Sgd {
                    batch_size: config.batch_size,
                },
                budget,
                t,
                problem.n(),
            ),
        }
    }

    /// Calibration from a precomputed [`NoisePlan::unit`].
    pub fn from_unit(problem: &Problem, config: &OptimizerConfig, unit: f64) -> Result<Self> {
        let n = problem.n() as f64;
        if config.algorithm.is_greedy() {
            let l = coordinate_sensitivity_bounds(problem, config.clipping_factor)?;
            let scales: Vec<f64> = l.iter().map(|l| 2.0 * l / (n * unit)).collect();
            Ok(NoisePlan::Laplace(NoiseCalibration {
                release_scales: scales.clone(),
                selection_scales: scales,
                per_step_epsilon: unit,
                iterations: config.iterations,
            }))
        } else {
            let sens = release_sensitivities(problem, config)?;
            Ok(NoisePlan::Gaussian(GaussianCalibration {
                noise_multiplier: unit,
                stds: sens.iter().map(|s| unit * s).collect(),
                iterations: config.iterations,
            }))
        }
    }
}

/// Component-Lipschitz constants after clipping at factor `c`.
pub fn coordinate_sensitivity_bounds(problem: &Problem, clipping_factor: f64) -> Result<Vec<f64>> {
    if clipping_factor.is_finite() {
        let thr = problem.coordinate_thresholds(clipping_factor);
        problem.lipschitz_constants(Some(&thr))
    } else {
        problem.lipschitz_constants(None)
    }
}

/// Norm bound on per-record gradients after clipping at `c` (SGD).
pub fn record_norm_bound(problem: &Problem, clipping_factor: f64) -> Result<f64> {
    match (problem.natural_record_norm_bound(), clipping_factor.is_finite()) {
        (Some(b), true) => Ok(b.min(clipping_factor)),
        (Some(b), false) => Ok(b),
        (None, true) => Ok(clipping_factor),
        (None, false) => Err(Error::MissingClipping),
    }
}

/// Replace-one sensitivities of the released statistics: `2 L_j / n` per
/// coordinate gradient (DP-CD), `2 C` for a sum of clipped gradients (SGD).
pub fn release_sensitivities(problem: &Problem, config: &OptimizerConfig) -> Result<Vec<f64>> {
    let n = problem.n() as f64;
    match config.algorithm {
        Algorithm::DpSgd => Ok(alloc::vec![2.0 * record_norm_bound(problem, config.clipping_factor)?]),
        _ => Ok(coordinate_sensitivity_bounds(problem, config.clipping_factor)?
            .iter()
            .map(|l| 2.0 * l / n)
            .collect()),
    }
}

/// Clipping thresholds actually applied to per-record coordinate gradients.
pub(crate) fn applied_thresholds(problem: &Problem, clipping_factor: f64) -> Vec<f64> {
    if clipping_factor.is_finite() {
        problem.coordinate_thresholds(clipping_factor)
    } else {
        alloc::vec![f64::INFINITY; problem.p()]
    }
}

/// Clipping thresholds tightened by the loss's own bounds on per-record
/// gradients (one value for SGD). Configurations that agree here and
/// elsewhere produce identical runs, since a threshold above the bound never
/// binds.
pub fn effective_clipping(problem: &Problem, algorithm: Algorithm, clipping_factor: f64) -> Vec<f64> {
    if algorithm == Algorithm::DpSgd {
        let c = match problem.natural_record_norm_bound() {
            Some(b) => b.min(clipping_factor),
            None => clipping_factor,
        };
        return alloc::vec![c];
    }
    let mut thr = applied_thresholds(problem, clipping_factor);
    if let Some(bounds) = problem.natural_coordinate_bounds() {
        for (t, b) in thr.iter_mut().zip(bounds) {
            *t = t.min(*b);
        }
    }
    thr
}

/// Runs the configured algorithm with its own seeded stream.
pub fn run(problem: &Problem, config: &OptimizerConfig, noise: &NoisePlan) -> Result<OptimizerRun> {
    let mut rng = NoiseRng::new(config.seed);
    let mut out = match (config.algorithm, noise) {
        (Algorithm::DpGcd, NoisePlan::Laplace(c)) => run_dp_gcd(problem, config, c, &mut rng),
        (Algorithm::DpGcdProximal(_), NoisePlan::Laplace(c)) => run_dp_gcd_proximal(problem, config, c, &mut rng),
        (Algorithm::DpCd, NoisePlan::Gaussian(g)) => run_dp_cd(problem, config, &g.stds, &mut rng),
        (Algorithm::DpSgd, NoisePlan::Gaussian(g)) => {
            let std = g.stds.first().copied().ok_or(Error::EmptyInput("noise std"))?;
            run_dp_sgd(problem, config, std, &mut rng)
        }
        _ => Err(invalid("noise", "noise plan does not match the algorithm")),
    }?;
    out.noise = noise.clone();
    Ok(out)
}

/// Calibrates for `budget` and runs.
pub fn run_private(problem: &Problem, config: &OptimizerConfig, budget: PrivacyBudget) -> Result<OptimizerRun> {
    config.validate(problem)?;
    let noise = NoisePlan::calibrate(problem, config, budget)?;
    run(problem, config, &noise)
}

/// Iterate shared by the coordinate methods: parameters plus margins.
pub(crate) struct CoordinateState {
    pub w: Vec<f64>,
    pub z: Vec<f64>,
}

impl CoordinateState {
    pub fn zero(problem: &Problem) -> Self {
        Self {
            w: alloc::vec![0.0; problem.p()],
            z: alloc::vec![0.0; problem.n()],
        }
    }

    /// Sets `w_j` to `value` and updates the margins.
    #[inline]
    pub fn set(&mut self, problem: &Problem, j: usize, value: f64) {
        let delta = value - self.w[j];
        if delta == 0.0 {
            return;
        }
        self.w[j] = value;
        for (z, x) in self.z.iter_mut().zip(problem.data().column(j)) {
            *z += delta * x;
        }
    }
}

pub(crate) fn checked_objective(value: f64, t: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Diverged { iteration: t })
    }
}

pub(crate) fn prepare(problem: &Problem, config: &OptimizerConfig) -> Result<OptimizerConfig> {
    config.validate(problem)?;
    let mut c = config.clone();
    c.recording = config.recording.normalized();
    Ok(c)
}
