//! Hyperparameter grids, repeated seeded runs and their aggregation.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dpgcd_core::mechanisms::derive_seed;
use dpgcd_core::optimizers::{self, effective_clipping, NoisePlan};
use dpgcd_core::{Algorithm, OptimizerConfig, PrivacyBudget, Problem, Recording};
use rayon::prelude::*;

use crate::io::{write_file, IoResult};

/// Floor on `|f*|` in [`relative_error`].
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-12;

/// `(f - f*) / max(|f*|, 1e-12)`, clamped at 0; non-finite values give
/// `+∞`.
pub fn relative_error(value: f64, f_star: f64) -> f64 {
    if !value.is_finite() || !f_star.is_finite() {
        return f64::INFINITY;
    }
    ((value - f_star) / f_star.abs().max(RELATIVE_ERROR_FLOOR)).max(0.0)
}

/// `k` values evenly spaced in log10 from `10^a` to `10^b`.
pub fn logspace(a: f64, b: f64, k: usize) -> Vec<f64> {
    match k {
        0 => Vec::new(),
        1 => vec![10f64.powf(a)],
        _ => {
            let step = (b - a) / (k - 1) as f64;
            (0..k)
                .map(|i| if i == k - 1 { 10f64.powf(b) } else { 10f64.powf(a + i as f64 * step) })
                .collect()
        }
    }
}

/// Hyperparameter values tried for one algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmGrid {
    pub algorithm: Algorithm,
    pub passes: Vec<f64>,
    pub step_sizes: Vec<f64>,
    pub clipping: Vec<f64>,
}

impl AlgorithmGrid {
    /// Default grid for `algorithm`.
    pub fn table2(algorithm: Algorithm) -> Self {
        let (passes, steps) = match algorithm {
            Algorithm::DpGcd | Algorithm::DpGcdProximal(_) => (
                vec![1.0, 2.0, 3.0, 4.0, 5.0, 7.0, 10.0, 15.0, 20.0, 30.0, 50.0],
                logspace(-2.0, 1.0, 10),
            ),
            Algorithm::DpCd => (vec![0.001, 0.01, 0.1, 1.0, 2.0, 3.0, 5.0], logspace(-2.0, 1.0, 10)),
            Algorithm::DpSgd => (vec![0.001, 0.01, 0.1, 1.0, 2.0, 3.0, 5.0], logspace(-6.0, 0.0, 10)),
        };
        Self {
            algorithm,
            passes,
            step_sizes: steps,
            clipping: logspace(-4.0, 6.0, 100),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let name = self.algorithm.name();
        for (what, values) in [("passes", &self.passes), ("step_sizes", &self.step_sizes), ("clipping", &self.clipping)] {
            if values.is_empty() {
                return Err(format!("{name}.{what}: empty list"));
            }
            if values.iter().any(|v| !(*v > 0.0) || v.is_nan()) {
                return Err(format!("{name}.{what}: values must be positive"));
            }
        }
        Ok(())
    }
}

/// Iterations corresponding to `passes` data passes, at least 1.
pub fn iterations_for(algorithm: Algorithm, passes: f64, n: usize, p: usize, batch_size: usize) -> usize {
    let per_pass = algorithm.iterations_per_pass(n, p, batch_size);
    ((passes * per_pass).round() as usize).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceDetail {
    /// Objective only at the pass ticks.
    Ticks,
    /// Objective after every iteration (best points only).
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub algorithms: Vec<AlgorithmGrid>,
    pub repeats: usize,
    /// `None` runs every algorithm without noise.
    pub budget: Option<PrivacyBudget>,
    pub master_seed: u64,
    pub batch_size: usize,
    pub trace: TraceDetail,
}

impl GridSpec {
    pub fn table2(algorithms: &[Algorithm], budget: Option<PrivacyBudget>, master_seed: u64) -> Self {
        Self {
            algorithms: algorithms.iter().map(|a| AlgorithmGrid::table2(*a)).collect(),
            repeats: 10,
            budget,
            master_seed,
            batch_size: 1,
            trace: TraceDetail::Ticks,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.repeats == 0 {
            return Err("repeats: must be at least 1".into());
        }
        if self.batch_size == 0 {
            return Err("batch_size: must be at least 1".into());
        }
        self.algorithms.iter().try_for_each(AlgorithmGrid::validate)
    }

    /// Seed of repeat `r`, shared by every algorithm and grid point.
    pub fn seed(&self, repeat: usize) -> u64 {
        derive_seed(self.master_seed, repeat as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickStats {
    pub passes: f64,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl TickStats {
    fn from_errors(passes: f64, errors: &[f64]) -> Self {
        let min = errors.iter().copied().fold(f64::INFINITY, f64::min);
        let max = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = if errors.iter().all(|e| e.is_finite()) {
            (errors.iter().sum::<f64>() / errors.len() as f64).clamp(min, max)
        } else {
            f64::INFINITY
        };
        Self { passes, min, mean, max }
    }
}

/// Aggregated repeats at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub passes: f64,
    pub iterations: usize,
    pub step_size: f64,
    pub clipping: f64,
    pub ticks: Vec<TickStats>,
    /// Final relative error of every repeat, in repeat order.
    pub final_errors: Vec<f64>,
    pub failures: usize,
}

impl PointResult {
    pub fn final_mean(&self) -> f64 {
        self.ticks.last().map(|t| t.mean).unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub coordinate: Option<usize>,
    pub objective: Option<f64>,
    pub passes: f64,
}

/// Per-iteration trace of one repeat at the best point.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub repeat: usize,
    pub seed: u64,
    pub rows: Vec<TraceRow>,
    /// Diagnostic when the run failed.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmResult {
    pub algorithm: Algorithm,
    pub points: Vec<PointResult>,
    pub best: Option<usize>,
    pub best_runs: Vec<RunTrace>,
    /// Noise of the best point (`None` when it could not be calibrated).
    pub best_noise: Option<NoisePlan>,
}

impl AlgorithmResult {
    pub fn best_point(&self) -> Option<&PointResult> {
        self.best.map(|b| &self.points[b])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkResult {
    pub problem: String,
    pub f_star: f64,
    /// Relative error of `w⁰ = 0`.
    pub initial_error: f64,
    pub budget: Option<PrivacyBudget>,
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    pub algorithms: Vec<AlgorithmResult>,
}

/// Index of the lowest final mean, ties broken by fewer passes then a
/// smaller step size.
pub fn select_best(points: &[PointResult]) -> Option<usize> {
    let key = |p: &PointResult| {
        let m = p.final_mean();
        (if m.is_nan() { f64::INFINITY } else { m }, p.passes, p.step_size)
    };
    (0..points.len()).min_by(|a, b| {
        let (ka, kb) = (key(&points[*a]), key(&points[*b]));
        ka.0.total_cmp(&kb.0)
            .then(ka.1.total_cmp(&kb.1))
            .then(ka.2.total_cmp(&kb.2))
            .then(a.cmp(b))
    })
}

struct Point {
    passes: f64,
    iterations: usize,
    step: f64,
    clip: f64,
    ticks: Vec<(f64, usize)>,
}

fn grid_points(problem: &Problem, grid: &AlgorithmGrid, batch: usize) -> Vec<Point> {
    let (n, p) = (problem.n(), problem.p());
    let alg = grid.algorithm;
    let per_pass = alg.iterations_per_pass(n, p, batch);
    let mut tick_iters: Vec<usize> = grid.passes.iter().map(|q| iterations_for(alg, *q, n, p, batch)).collect();
    tick_iters.sort_unstable();
    tick_iters.dedup();
    let mut out = Vec::new();
    for &passes in &grid.passes {
        let iterations = iterations_for(alg, passes, n, p, batch);
        let ticks: Vec<(f64, usize)> = tick_iters
            .iter()
            .filter(|t| **t <= iterations)
            .map(|t| (*t as f64 / per_pass, *t))
            .collect();
        for &step in &grid.step_sizes {
            for &clip in &grid.clipping {
                out.push(Point {
                    passes,
                    iterations,
                    step,
                    clip,
                    ticks: ticks.clone(),
                });
            }
        }
    }
    out
}

fn config_for(grid: &GridSpec, alg: Algorithm, point: &Point, repeat: usize) -> OptimizerConfig {
    OptimizerConfig::new(alg, point.iterations)
        .step_factor(point.step)
        .clipping_factor(point.clip)
        .batch_size(grid.batch_size)
        .seed(grid.seed(repeat))
        .recording(Recording::At(point.ticks.iter().map(|t| t.1).collect()))
        .record_noise(false)
}

#[derive(Clone)]
struct Outcome {
    tick_errors: Vec<f64>,
    failure: Option<String>,
    trace: Option<RunTrace>,
}

fn noise_plan(
    problem: &Problem,
    config: &OptimizerConfig,
    budget: Option<PrivacyBudget>,
    units: &HashMap<(usize, usize), Result<f64, String>>,
    alg_index: usize,
) -> Result<NoisePlan, String> {
    match budget {
        None => Ok(NoisePlan::noiseless(problem, config)),
        Some(_) => {
            let unit = units
                .get(&(alg_index, config.iterations))
                .expect("unit computed for every iteration count")
                .clone()?;
            NoisePlan::from_unit(problem, config, unit).map_err(|e| e.to_string())
        }
    }
}

fn execute(
    problem: &Problem,
    f_star: f64,
    config: &OptimizerConfig,
    plan: Result<NoisePlan, String>,
    ticks: &[(f64, usize)],
    keep_trace: Option<usize>,
) -> Outcome {
    let fail = |msg: String| Outcome {
        tick_errors: vec![f64::INFINITY; ticks.len()],
        failure: Some(msg.clone()),
        trace: keep_trace.map(|repeat| RunTrace {
            repeat,
            seed: config.seed,
            rows: Vec::new(),
            failure: Some(msg),
        }),
    };
    let plan = match plan {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let run = match optimizers::run(problem, config, &plan) {
        Ok(r) => r,
        Err(e) => return fail(e.to_string()),
    };
    let curve: HashMap<usize, f64> = run.objective_curve().into_iter().collect();
    let tick_errors = ticks
        .iter()
        .map(|(_, t)| curve.get(t).map(|f| relative_error(*f, f_star)).unwrap_or(f64::INFINITY))
        .collect();
    let trace = keep_trace.map(|repeat| {
        let per_pass = config.algorithm.iterations_per_pass(problem.n(), problem.p(), config.batch_size);
        RunTrace {
            repeat,
            seed: config.seed,
            rows: run
                .trace
                .iter()
                .map(|r| TraceRow {
                    t: r.t,
                    coordinate: r.coordinate,
                    objective: r.objective,
                    passes: (r.t + 1) as f64 / per_pass,
                })
                .collect(),
            failure: None,
        }
    });
    Outcome {
        tick_errors,
        failure: None,
        trace,
    }
}

/// Runs every grid point and repeat and aggregates relative errors against
/// `f_star`. Runs that differ only in clipping thresholds that never bind
/// are computed once. `jobs` caps the worker threads (`None`: all cores).
pub fn run_grid(problem: &Problem, f_star: f64, grid: &GridSpec, jobs: Option<usize>) -> Result<BenchmarkResult, String> {
    grid.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| e.to_string())?;
    pool.install(|| run_grid_inner(problem, f_star, grid))
}

fn run_grid_inner(problem: &Problem, f_star: f64, grid: &GridSpec) -> Result<BenchmarkResult, String> {
    let batch = grid.batch_size;
    let points: Vec<Vec<Point>> = grid.algorithms.iter().map(|g| grid_points(problem, g, batch)).collect();

    let mut unit_keys: Vec<(usize, usize)> = Vec::new();
    for (a, pts) in points.iter().enumerate() {
        for pt in pts {
            unit_keys.push((a, pt.iterations));
        }
    }
    unit_keys.sort_unstable();
    unit_keys.dedup();
    let units: HashMap<(usize, usize), Result<f64, String>> = match grid.budget {
        None => HashMap::new(),
        Some(budget) => unit_keys
            .par_iter()
            .map(|&(a, t)| {
                let cfg = OptimizerConfig::new(grid.algorithms[a].algorithm, t).batch_size(batch);
                ((a, t), NoisePlan::unit(problem, &cfg, budget).map_err(|e| e.to_string()))
            })
            .collect(),
    };

    // distinct runs, keyed by everything that can change the result
    let mut index: HashMap<(usize, usize, u64, Vec<u64>, usize), usize> = HashMap::new();
    let mut work: Vec<(usize, usize, usize)> = Vec::new();
    let mut slots: Vec<Vec<Vec<usize>>> = Vec::new();
    for (a, pts) in points.iter().enumerate() {
        let alg = grid.algorithms[a].algorithm;
        let mut per_point = Vec::with_capacity(pts.len());
        for (k, pt) in pts.iter().enumerate() {
            let clip_key: Vec<u64> = effective_clipping(problem, alg, pt.clip)
                .iter()
                .map(|v| v.to_bits())
                .collect();
            let mut per_repeat = Vec::with_capacity(grid.repeats);
            for r in 0..grid.repeats {
                let key = (a, pt.iterations, pt.step.to_bits(), clip_key.clone(), r);
                let next = work.len();
                let slot = *index.entry(key).or_insert(next);
                if slot == next {
                    work.push((a, k, r));
                }
                per_repeat.push(slot);
            }
            per_point.push(per_repeat);
        }
        slots.push(per_point);
    }

    let outcomes: Vec<Outcome> = work
        .par_iter()
        .map(|&(a, k, r)| {
            let alg = grid.algorithms[a].algorithm;
            let pt = &points[a][k];
            let cfg = config_for(grid, alg, pt, r);
            let plan = noise_plan(problem, &cfg, grid.budget, &units, a);
            execute(problem, f_star, &cfg, plan, &pt.ticks, None)
        })
        .collect();

    let mut algorithms = Vec::with_capacity(grid.algorithms.len());
    for (a, pts) in points.iter().enumerate() {
        let alg = grid.algorithms[a].algorithm;
        let results: Vec<PointResult> = pts
            .iter()
            .enumerate()
            .map(|(k, pt)| {
                let runs: Vec<&Outcome> = slots[a][k].iter().map(|s| &outcomes[*s]).collect();
                let ticks = pt
                    .ticks
                    .iter()
                    .enumerate()
                    .map(|(i, (passes, _))| {
                        let errs: Vec<f64> = runs.iter().map(|o| o.tick_errors[i]).collect();
                        TickStats::from_errors(*passes, &errs)
                    })
                    .collect();
                PointResult {
                    passes: pt.passes,
                    iterations: pt.iterations,
                    step_size: pt.step,
                    clipping: pt.clip,
                    ticks,
                    final_errors: runs.iter().map(|o| *o.tick_errors.last().unwrap_or(&f64::INFINITY)).collect(),
                    failures: runs.iter().filter(|o| o.failure.is_some()).count(),
                }
            })
            .collect();
        let best = select_best(&results);
        let (best_runs, best_noise) = match best {
            None => (Vec::new(), None),
            Some(b) => {
                let pt = &pts[b];
                let mut noise = None;
                let traces: Vec<RunTrace> = (0..grid.repeats)
                    .into_par_iter()
                    .map(|r| {
                        let mut cfg = config_for(grid, alg, pt, r);
                        if grid.trace == TraceDetail::All {
                            cfg.recording = Recording::All;
                        }
                        let plan = noise_plan(problem, &cfg, grid.budget, &units, a);
                        execute(problem, f_star, &cfg, plan, &pt.ticks, Some(r)).trace.expect("trace kept")
                    })
                    .collect();
                let cfg = config_for(grid, alg, pt, 0);
                if let Ok(plan) = noise_plan(problem, &cfg, grid.budget, &units, a) {
                    noise = Some(plan);
                }
                (traces, noise)
            }
        };
        algorithms.push(AlgorithmResult {
            algorithm: alg,
            points: results,
            best,
            best_runs,
            best_noise,
        });
    }

    let initial = problem
        .objective(&vec![0.0; problem.p()])
        .map_err(|e| e.to_string())?;
    Ok(BenchmarkResult {
        problem: problem.data().name().to_string(),
        f_star,
        initial_error: relative_error(initial, f_star),
        budget: grid.budget,
        master_seed: grid.master_seed,
        seeds: (0..grid.repeats).map(|r| grid.seed(r)).collect(),
        algorithms,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub final_mean: f64,
    pub passes: f64,
    pub step_size: f64,
    pub clipping: f64,
}

/// Paired comparison of the reference algorithm against one other.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedComparison {
    pub reference: Algorithm,
    pub other: Algorithm,
    pub reference_mean: f64,
    pub other_mean: f64,
    pub reference_better: bool,
    /// Fraction of shared seeds on which the reference's final error is
    /// strictly lower.
    pub win_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// Best points, lowest final mean first.
    pub ranking: Vec<AlgorithmSummary>,
    pub pairs: Vec<PairedComparison>,
}

/// Compares best points; the first algorithm of the result is the
/// reference of the paired comparisons.
pub fn compare(result: &BenchmarkResult) -> Comparison {
    let mut ranking: Vec<AlgorithmSummary> = result
        .algorithms
        .iter()
        .filter_map(|a| {
            a.best_point().map(|b| AlgorithmSummary {
                algorithm: a.algorithm,
                final_mean: b.final_mean(),
                passes: b.passes,
                step_size: b.step_size,
                clipping: b.clipping,
            })
        })
        .collect();
    ranking.sort_by(|a, b| a.final_mean.total_cmp(&b.final_mean));
    let mut pairs = Vec::new();
    if let Some((first, rest)) = result.algorithms.split_first() {
        if let Some(rb) = first.best_point() {
            for other in rest {
                let Some(ob) = other.best_point() else { continue };
                let wins = rb
                    .final_errors
                    .iter()
                    .zip(&ob.final_errors)
                    .filter(|(r, o)| r < o)
                    .count();
                let shared = rb.final_errors.len().min(ob.final_errors.len()).max(1);
                pairs.push(PairedComparison {
                    reference: first.algorithm,
                    other: other.algorithm,
                    reference_mean: rb.final_mean(),
                    other_mean: ob.final_mean(),
                    reference_better: rb.final_mean() < ob.final_mean(),
                    win_fraction: wins as f64 / shared as f64,
                });
            }
        }
    }
    Comparison { ranking, pairs }
}

/// [`run_grid`] followed by [`compare`].
pub fn compare_algorithms(
    problem: &Problem,
    f_star: f64,
    grid: &GridSpec,
    jobs: Option<usize>,
) -> Result<(BenchmarkResult, Comparison), String> {
    if grid.algorithms.len() < 2 {
        return Err("comparison needs at least two algorithms".into());
    }
    let result = run_grid(problem, f_star, grid, jobs)?;
    let cmp = compare(&result);
    Ok((result, cmp))
}

pub const CURVES_HEADER: &str = "algorithm,passes,err_min,err_mean,err_max";
pub const BEST_HEADER: &str = "algorithm,passes,iterations,step_size,clipping,err_final_mean,failures";
pub const POINTS_HEADER: &str =
    "algorithm,passes,iterations,step_size,clipping,err_final_min,err_final_mean,err_final_max,failures";
pub const TRACE_HEADER: &str = "run,t,coordinate,objective,passes";

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn curves_csv(result: &BenchmarkResult) -> String {
    let mut s = format!("{CURVES_HEADER}\n");
    for a in &result.algorithms {
        if let Some(b) = a.best_point() {
            for t in &b.ticks {
                let _ = writeln!(s, "{},{},{},{},{}", a.algorithm.name(), num(t.passes), num(t.min), num(t.mean), num(t.max));
            }
        }
    }
    s
}

pub fn best_csv(result: &BenchmarkResult) -> String {
    let mut s = format!("{BEST_HEADER}\n");
    for a in &result.algorithms {
        if let Some(b) = a.best_point() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                a.algorithm.name(),
                num(b.passes),
                b.iterations,
                num(b.step_size),
                num(b.clipping),
                num(b.final_mean()),
                b.failures
            );
        }
    }
    s
}

pub fn points_csv(result: &BenchmarkResult) -> String {
    let mut s = format!("{POINTS_HEADER}\n");
    for a in &result.algorithms {
        for p in &a.points {
            let last = p.ticks.last().copied().unwrap_or(TickStats {
                passes: p.passes,
                min: f64::INFINITY,
                mean: f64::INFINITY,
                max: f64::INFINITY,
            });
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                a.algorithm.name(),
                num(p.passes),
                p.iterations,
                num(p.step_size),
                num(p.clipping),
                num(last.min),
                num(last.mean),
                num(last.max),
                p.failures
            );
        }
    }
    s
}

pub fn trace_csv(algorithm: Algorithm, trace: &RunTrace) -> String {
    let id = format!("{}-r{}", algorithm.name(), trace.repeat);
    let mut s = format!("{TRACE_HEADER}\n");
    for r in &trace.rows {
        let j = r.coordinate.map(|j| j.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{id},{},{j},{},{}", r.t, opt_num(r.objective), num(r.passes));
    }
    s
}

fn toml_list(values: &[f64]) -> String {
    let items: Vec<String> = values.iter().map(|v| toml_float(*v)).collect();
    format!("[{}]", items.join(", "))
}

fn toml_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        num(v)
    }
}

pub fn manifest_text(result: &BenchmarkResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "problem = {:?}", result.problem);
    let _ = writeln!(s, "f_star = {}", toml_float(result.f_star));
    let _ = writeln!(s, "initial_error = {}", toml_float(result.initial_error));
    match result.budget {
        Some(b) => {
            let _ = writeln!(s, "epsilon = {}", toml_float(b.epsilon));
            let _ = writeln!(s, "delta = {}", toml_float(b.delta));
        }
        None => {
            let _ = writeln!(s, "noiseless = true");
        }
    }
    let _ = writeln!(s, "master_seed = {}", result.master_seed);
    let _ = writeln!(s, "repeats = {}", result.seeds.len());
    let seeds: Vec<String> = result.seeds.iter().map(|v| format!("{:?}", v.to_string())).collect();
    let _ = writeln!(s, "seeds = [{}]", seeds.join(", "));
    for a in &result.algorithms {
        let _ = writeln!(s, "\n[{}]", a.algorithm.name());
        let _ = writeln!(s, "grid_points = {}", a.points.len());
        if let Some(b) = a.best_point() {
            let _ = writeln!(s, "best_passes = {}", toml_float(b.passes));
            let _ = writeln!(s, "best_iterations = {}", b.iterations);
            let _ = writeln!(s, "best_step_size = {}", toml_float(b.step_size));
            let _ = writeln!(s, "best_clipping = {}", toml_float(b.clipping));
            let _ = writeln!(s, "best_final_mean = {}", toml_float(b.final_mean()));
        }
        match &a.best_noise {
            Some(NoisePlan::Laplace(c)) => {
                let _ = writeln!(s, "per_step_epsilon = {}", toml_float(c.per_step_epsilon));
                let _ = writeln!(s, "release_scales = {}", toml_list(&c.release_scales));
                let _ = writeln!(s, "selection_scales = {}", toml_list(&c.selection_scales));
            }
            Some(NoisePlan::Gaussian(g)) => {
                let _ = writeln!(s, "noise_multiplier = {}", toml_float(g.noise_multiplier));
                let _ = writeln!(s, "stds = {}", toml_list(&g.stds));
            }
            None => {}
        }
    }
    s
}

/// Writes `curves.csv`, `best.csv`, `points.csv`, `runs/*.csv` and
/// `manifest.toml` under `dir`; returns the written paths.
pub fn emit_results(result: &BenchmarkResult, dir: &Path) -> IoResult<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut put = |name: PathBuf, text: String| -> IoResult<()> {
        write_file(&name, text.as_bytes())?;
        written.push(name);
        Ok(())
    };
    put(dir.join("curves.csv"), curves_csv(result))?;
    put(dir.join("best.csv"), best_csv(result))?;
    put(dir.join("points.csv"), points_csv(result))?;
    for a in &result.algorithms {
        for t in &a.best_runs {
            put(
                dir.join("runs").join(format!("{}-r{}.csv", a.algorithm.name(), t.repeat)),
                trace_csv(a.algorithm, t),
            )?;
        }
    }
    put(dir.join("manifest.toml"), manifest_text(result))?;
    Ok(written)
}
