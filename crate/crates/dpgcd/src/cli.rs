//! Command-line interface.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dpgcd_core::accountant::{
    calibrate_baseline, calibrate_gcd_closed_form, calibrate_gcd_numeric, Baseline, PrivacyBudget,
};
use dpgcd_core::optimizers::{self, solve_reference, NoisePlan};
use dpgcd_core::synth::{
    feature_standardize, generate_synthetic, solution_profile, LabelMode, Standardization, SyntheticSpec,
};
use dpgcd_core::{Algorithm, Dataset, GreedyRule, OptimizerConfig, Problem, Recording, Regularizer, RegularizerKind};

use crate::bench::{self, emit_results, run_grid, GridSpec};
use crate::config::{parse_loss, parse_regularizer, parse_trace, BenchmarkConfig};
use crate::io::{
    self, load_csv, load_libsvm, save_csv, CsvOptions, DatasetManifest, LabelColumn, LabelKind, Source,
    StandardizationRecord,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or configuration (exit code 2).
    #[error("{0}")]
    Usage(String),
    /// Failure while running (exit code 1).
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn runtime(msg: impl std::fmt::Display) -> CliError {
    CliError::Runtime(msg.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "dpgcd", version, about = "Private greedy coordinate descent and baselines")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (CSV + manifest).
    Generate(GenerateArgs),
    /// Print calibrated noise scales as CSV.
    Calibrate(CalibrateArgs),
    /// Run one optimizer on a dataset.
    Solve(SolveArgs),
    /// Run a hyperparameter grid from a config file.
    Benchmark(BenchmarkArgs),
    /// Profile the magnitudes of the non-private solution.
    Profile(ProfileArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Preset: log1, log2 or sparse.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    /// Log-normal σ of |w_true|.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Nonzero entries of w_true (dense when absent).
    #[arg(long)]
    pub sparse_count: Option<usize>,
    /// regression or sign.
    #[arg(long)]
    pub label_mode: Option<String>,
    #[arg(long)]
    pub noise_std: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// File stem (defaults to the preset name or "synthetic").
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// dp-gcd, dp-cd or dp-sgd.
    #[arg(long, default_value = "dp-gcd")]
    pub algorithm: String,
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long)]
    pub delta: f64,
    /// Iteration count T.
    #[arg(long = "iterations", short = 'T')]
    pub iterations: usize,
    /// Number of records.
    #[arg(long)]
    pub n: usize,
    /// Comma-separated L_j, or one value repeated --p times (for dp-sgd:
    /// the per-record gradient norm bound).
    #[arg(long, default_value = "1")]
    pub lipschitz: String,
    #[arg(long, default_value_t = 1)]
    pub p: usize,
    /// Use the closed form (greedy CD, ε ≤ 1).
    #[arg(long)]
    pub closed_form: bool,
    #[arg(long, default_value_t = 1)]
    pub batch_size: usize,
}

#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    /// Dataset file.
    #[arg(long)]
    pub data: PathBuf,
    /// csv or libsvm.
    #[arg(long, default_value = "csv")]
    pub format: String,
    /// The CSV has a header line.
    #[arg(long)]
    pub header: bool,
    /// first, last or a 0-based column index.
    #[arg(long, default_value = "last")]
    pub label_column: String,
    /// Map {0, 1} class labels to {-1, +1}.
    #[arg(long)]
    pub map_binary: bool,
    /// Feature count hint for libsvm.
    #[arg(long, default_value_t = 0)]
    pub dimension: usize,
    /// none, unitMaxAbs or zscore.
    #[arg(long, default_value = "none")]
    pub standardize: String,
    /// Verify the data against this manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct ModelArgs {
    /// logistic or squared.
    #[arg(long, default_value = "logistic")]
    pub loss: String,
    /// none, l2 or l1.
    #[arg(long, default_value = "none")]
    pub regularizer: String,
    #[arg(long, default_value_t = 0.0)]
    pub strength: f64,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// dp-gcd, dp-cd or dp-sgd.
    #[arg(long, default_value = "dp-gcd")]
    pub algorithm: String,
    /// Greedy rule for l1 problems: gs-s, gs-r or gs-q.
    #[arg(long)]
    pub rule: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    /// Defaults to 1/n².
    #[arg(long)]
    pub delta: Option<f64>,
    /// on or off.
    #[arg(long, default_value = "on")]
    pub noise: String,
    /// Iteration count T.
    #[arg(long = "iterations", short = 'T', conflicts_with = "passes")]
    pub iterations: Option<usize>,
    /// Data passes (converted to iterations).
    #[arg(long)]
    pub passes: Option<f64>,
    /// Step-size factor γ.
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
    /// Clipping factor c ("inf" disables clipping).
    #[arg(long, default_value_t = f64::INFINITY)]
    pub clip: f64,
    #[arg(long, default_value_t = 1)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the per-iteration trace CSV here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Also solve the non-private problem and report the relative error.
    #[arg(long)]
    pub reference: bool,
    #[arg(long, default_value_t = 1e-10)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// TOML configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Maximum concurrent runs.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Master seed (overrides the config).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1e-10)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 0.99)]
    pub quantile: f64,
}

/// Parses `args` (program name first), runs the command and returns its
/// exit code. Output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match execute(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> ExitCode {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let code = run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock());
    ExitCode::from(code)
}

fn execute(command: Command, out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) -> Result<(), CliError> {
    let text = match command {
        Command::Generate(a) => cmd_generate(&a)?,
        Command::Calibrate(a) => cmd_calibrate(&a)?,
        Command::Solve(a) => cmd_solve(&a, err)?,
        Command::Benchmark(a) => cmd_benchmark(&a, err)?,
        Command::Profile(a) => cmd_profile(&a, err)?,
    };
    out.write_all(text.as_bytes()).map_err(runtime)
}

fn parse_algorithm(name: &str, rule: Option<&str>) -> Result<Algorithm, CliError> {
    let rule = rule
        .map(|r| GreedyRule::parse(r).ok_or_else(|| usage(format!("--rule: unknown rule {r:?}"))))
        .transpose()?;
    match (name, rule) {
        ("dp-gcd" | "gcd", None) => Ok(Algorithm::DpGcd),
        ("dp-gcd" | "gcd", Some(r)) => Ok(Algorithm::DpGcdProximal(r)),
        ("dp-cd" | "cd", None) => Ok(Algorithm::DpCd),
        ("dp-sgd" | "sgd", None) => Ok(Algorithm::DpSgd),
        ("dp-cd" | "cd" | "dp-sgd" | "sgd", Some(_)) => Err(usage("--rule only applies to dp-gcd")),
        (other, _) => Err(usage(format!("--algorithm: unknown algorithm {other:?}"))),
    }
}

fn budget(epsilon: f64, delta: f64) -> Result<PrivacyBudget, CliError> {
    PrivacyBudget::new(epsilon, delta).map_err(|e| usage(format!("invalid budget: {e}")))
}

fn cmd_generate(a: &GenerateArgs) -> Result<String, CliError> {
    let mut spec = match &a.preset {
        Some(name) => SyntheticSpec::preset(name, a.seed).ok_or_else(|| {
            usage(format!("--preset: unknown preset {name:?} (expected one of {:?})", SyntheticSpec::PRESETS))
        })?,
        None => {
            let (Some(n), Some(p)) = (a.n, a.p) else {
                return Err(usage("either --preset or both --n and --p are required"));
            };
            SyntheticSpec {
                name: "synthetic".into(),
                n,
                p,
                w_sigma: 1.0,
                sparse_count: None,
                noise_std: 1.0,
                label_mode: LabelMode::Regression,
                seed: a.seed,
            }
        }
    };
    if let Some(n) = a.n {
        spec.n = n;
    }
    if let Some(p) = a.p {
        spec.p = p;
    }
    if let Some(s) = a.sigma {
        spec.w_sigma = s;
    }
    if a.sparse_count.is_some() {
        spec.sparse_count = a.sparse_count;
    }
    if let Some(s) = a.noise_std {
        spec.noise_std = s;
    }
    if let Some(m) = &a.label_mode {
        spec.label_mode =
            LabelMode::parse(m).ok_or_else(|| usage(format!("--label-mode: expected regression or sign, got {m:?}")))?;
    }
    if let Some(name) = &a.name {
        spec.name = name.clone();
    }
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let data = generate_synthetic(&spec).map_err(runtime)?;

    let stem = spec.name.clone();
    let csv_path = a.out.join(format!("{stem}.csv"));
    let manifest_path = a.out.join(format!("{stem}.manifest.toml"));
    let w_path = a.out.join(format!("{stem}.w_true.csv"));
    save_csv(&data.dataset, &csv_path, false).map_err(runtime)?;
    let mut manifest = DatasetManifest::for_dataset(&data.dataset, Source::Synthetic, spec.label_mode);
    manifest.seed = Some(spec.seed);
    manifest.data_file = Some(format!("{stem}.csv"));
    manifest.save(&manifest_path).map_err(runtime)?;
    let mut w_text = String::from("w_true\n");
    for w in &data.w_true {
        let _ = writeln!(w_text, "{w:?}");
    }
    io::write_file(&w_path, w_text.as_bytes()).map_err(runtime)?;

    Ok(format!(
        "data = {}\nmanifest = {}\nw_true = {}\nn = {}\np = {}\nchecksum = {}\n",
        csv_path.display(),
        manifest_path.display(),
        w_path.display(),
        spec.n,
        spec.p,
        manifest.checksum
    ))
}

fn parse_lipschitz(spec: &str, p: usize) -> Result<Vec<f64>, CliError> {
    let values: Vec<f64> = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| usage(format!("--lipschitz: not a number: {s:?}"))))
        .collect::<Result<_, _>>()?;
    if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(usage("--lipschitz: values must be finite and nonnegative"));
    }
    if values.len() == 1 && p > 1 {
        Ok(vec![values[0]; p])
    } else {
        Ok(values)
    }
}

fn cmd_calibrate(a: &CalibrateArgs) -> Result<String, CliError> {
    let b = budget(a.epsilon, a.delta)?;
    if a.iterations == 0 {
        return Err(usage("--iterations: must be at least 1"));
    }
    if a.n == 0 {
        return Err(usage("--n: must be at least 1"));
    }
    let alg = parse_algorithm(&a.algorithm, None)?;
    let l = parse_lipschitz(&a.lipschitz, a.p)?;
    let mut s = String::from("algorithm,epsilon,delta,T,coordinate,scale\n");
    let mut row = |coord: String, scale: f64| {
        let _ = writeln!(s, "{},{:?},{:?},{},{coord},{scale:?}", alg.name(), a.epsilon, a.delta, a.iterations);
    };
    match alg {
        Algorithm::DpGcd | Algorithm::DpGcdProximal(_) => {
            let cal = if a.closed_form {
                if a.epsilon > 1.0 {
                    return Err(usage("--closed-form requires epsilon <= 1; drop the flag for numeric calibration"));
                }
                calibrate_gcd_closed_form(b, a.iterations, &l, a.n)
            } else {
                calibrate_gcd_numeric(b, a.iterations, &l, a.n)
            }
            .map_err(runtime)?;
            for (j, v) in cal.release_scales.iter().enumerate() {
                row(j.to_string(), *v);
            }
        }
        Algorithm::DpCd | Algorithm::DpSgd => {
            if a.closed_form {
                return Err(usage("--closed-form applies to dp-gcd only"));
            }
            let n = a.n as f64;
            let (baseline, sens): (Baseline, Vec<f64>) = if alg == Algorithm::DpCd {
                (Baseline::CoordinateDescent, l.iter().map(|v| 2.0 * v / n).collect())
            } else {
                if a.batch_size == 0 || a.batch_size > a.n {
                    return Err(usage("--batch-size: must lie in 1..=n"));
                }
                (
                    Baseline::Sgd {
                        batch_size: a.batch_size,
                    },
                    vec![2.0 * l[0]],
                )
            };
            let cal = calibrate_baseline(baseline, b, a.iterations, &sens, a.n).map_err(runtime)?;
            if alg == Algorithm::DpSgd {
                row("all".into(), cal.stds[0]);
            } else {
                for (j, v) in cal.stds.iter().enumerate() {
                    row(j.to_string(), *v);
                }
            }
        }
    }
    Ok(s)
}

struct LoadedData {
    data: Dataset,
    standardization: Option<StandardizationRecord>,
}

fn load_data(a: &DataArgs, loss: dpgcd_core::LossKind) -> Result<LoadedData, CliError> {
    let mode = Standardization::parse(&a.standardize)
        .ok_or_else(|| usage(format!("--standardize: unknown mode {:?}", a.standardize)))?;
    let labels = match loss {
        dpgcd_core::LossKind::Logistic => LabelKind::Classification {
            map_binary: a.map_binary,
        },
        dpgcd_core::LossKind::SquaredError => LabelKind::Regression,
    };
    let data = match a.format.as_str() {
        "csv" => {
            let label_column = LabelColumn::parse(&a.label_column)
                .ok_or_else(|| usage(format!("--label-column: expected first, last or an index, got {:?}", a.label_column)))?;
            load_csv(
                &a.data,
                &CsvOptions {
                    label_column,
                    header: a.header,
                    labels,
                },
            )
            .map_err(runtime)?
        }
        "libsvm" => {
            let d = load_libsvm(&a.data, a.dimension).map_err(runtime)?;
            let mapped: Option<Vec<f64>> = d.labels().iter().map(|y| io::map_label(*y, labels)).collect();
            let mapped =
                mapped.ok_or_else(|| runtime(format!("{}: class labels must be -1/+1 (or 0/1 with --map-binary)", a.data.display())))?;
            d.with_labels(mapped).map_err(runtime)?
        }
        other => return Err(usage(format!("--format: expected csv or libsvm, got {other:?}"))),
    };
    if let Some(m) = &a.manifest {
        let manifest = DatasetManifest::load(m).map_err(runtime)?;
        manifest
            .verify(&data)
            .map_err(|e| runtime(format!("{}: {e}", m.display())))?;
    }
    let (data, standardization) = match mode {
        Standardization::None => (data, None),
        _ => {
            let (d, report) = feature_standardize(&data, mode).map_err(runtime)?;
            (
                d,
                Some(StandardizationRecord {
                    mode: mode.name().into(),
                    shift: report.shift,
                    scale: report.scale,
                }),
            )
        }
    };
    Ok(LoadedData { data, standardization })
}

fn build_problem(data: Dataset, m: &ModelArgs) -> Result<Problem, CliError> {
    let loss = parse_loss(&m.loss).ok_or_else(|| usage(format!("--loss: expected logistic or squared, got {:?}", m.loss)))?;
    let kind = parse_regularizer(&m.regularizer)
        .ok_or_else(|| usage(format!("--regularizer: expected none, l2 or l1, got {:?}", m.regularizer)))?;
    let reg = Regularizer::new(kind, m.strength).map_err(|e| usage(format!("--strength: {e}")))?;
    Problem::new(data, loss, reg).map_err(runtime)
}

fn model_loss(m: &ModelArgs) -> Result<dpgcd_core::LossKind, CliError> {
    parse_loss(&m.loss).ok_or_else(|| usage(format!("--loss: expected logistic or squared, got {:?}", m.loss)))
}

fn cmd_solve(a: &SolveArgs, err: &mut dyn std::io::Write) -> Result<String, CliError> {
    let alg = parse_algorithm(&a.algorithm, a.rule.as_deref())?;
    let kind = parse_regularizer(&a.model.regularizer)
        .ok_or_else(|| usage(format!("--regularizer: expected none, l2 or l1, got {:?}", a.model.regularizer)))?;
    match (alg, kind) {
        (Algorithm::DpGcdProximal(_), k) if k != RegularizerKind::L1 => {
            return Err(usage("--rule requires --regularizer l1"));
        }
        (Algorithm::DpGcd, RegularizerKind::L1) => {
            return Err(usage("dp-gcd with --regularizer l1 needs --rule (gs-s, gs-r or gs-q)"));
        }
        _ => {}
    }
    let noisy = match a.noise.as_str() {
        "on" => true,
        "off" => false,
        other => return Err(usage(format!("--noise: expected on or off, got {other:?}"))),
    };
    let loss = model_loss(&a.model)?;
    let loaded = load_data(&a.data, loss)?;
    let problem = build_problem(loaded.data, &a.model)?;
    let (n, p) = (problem.n(), problem.p());
    let iterations = match (a.iterations, a.passes) {
        (Some(t), _) => t,
        (None, Some(q)) if q > 0.0 => bench::iterations_for(alg, q, n, p, a.batch_size),
        (None, Some(_)) => return Err(usage("--passes: must be positive")),
        (None, None) => return Err(usage("one of --iterations or --passes is required")),
    };
    let config = OptimizerConfig::new(alg, iterations)
        .step_factor(a.step)
        .clipping_factor(a.clip)
        .batch_size(a.batch_size)
        .seed(a.seed)
        .recording(Recording::All)
        .record_noise(false);
    config.validate(&problem).map_err(|e| usage(e.to_string()))?;
    let plan = if noisy {
        let delta = a.delta.unwrap_or(1.0 / (n as f64 * n as f64));
        NoisePlan::calibrate(&problem, &config, budget(a.epsilon, delta)?).map_err(runtime)?
    } else {
        NoisePlan::noiseless(&problem, &config)
    };
    let run = optimizers::run(&problem, &config, &plan).map_err(|e| runtime(format!("run failed: {e}")))?;

    let mut s = String::new();
    let _ = writeln!(s, "algorithm = {}", alg.name());
    let _ = writeln!(s, "iterations = {}", iterations);
    let _ = writeln!(s, "passes = {:?}", run.passes);
    let _ = writeln!(s, "final_objective = {:?}", run.final_objective);
    let _ = writeln!(s, "nonzeros = {}", dpgcd_core::sparsity::nnz(&run.final_iterate));
    if a.reference {
        let r = solve_reference(&problem, a.tolerance).map_err(runtime)?;
        if !r.converged {
            let _ = writeln!(err, "warning: reference solver stopped at the step cap (residual {:e})", r.residual);
        }
        let _ = writeln!(s, "reference_objective = {:?}", r.objective);
        let _ = writeln!(s, "relative_error = {:?}", bench::relative_error(run.final_objective, r.objective));
    }
    if let Some(path) = &a.trace {
        let per_pass = alg.iterations_per_pass(n, p, a.batch_size);
        let mut t = String::from(bench::TRACE_HEADER);
        t.push('\n');
        for r in &run.trace {
            let j = r.coordinate.map(|j| j.to_string()).unwrap_or_default();
            let f = r.objective.map(|f| format!("{f:?}")).unwrap_or_default();
            let _ = writeln!(t, "{}-s{},{},{j},{f},{:?}", alg.name(), a.seed, r.t, (r.t + 1) as f64 / per_pass);
        }
        io::write_file(path, t.as_bytes()).map_err(runtime)?;
        let _ = writeln!(s, "trace = {}", path.display());
    }
    Ok(s)
}

fn data_from_config(cfg: &BenchmarkConfig, base: &Path) -> Result<LoadedData, CliError> {
    let d = &cfg.data;
    let loss = parse_loss(&cfg.problem.loss).expect("checked on load");
    if let Some(name) = &d.preset {
        let mut spec = SyntheticSpec::preset(name, d.seed)
            .ok_or_else(|| usage(format!("data.preset: unknown preset {name:?}")))?;
        if let Some(n) = d.n {
            spec.n = n;
        }
        if let Some(p) = d.p {
            spec.p = p;
        }
        if let Some(s) = d.sigma {
            spec.w_sigma = s;
        }
        if d.sparse_count.is_some() {
            spec.sparse_count = d.sparse_count;
        }
        if let Some(s) = d.noise_std {
            spec.noise_std = s;
        }
        if let Some(m) = &d.label_mode {
            spec.label_mode = LabelMode::parse(m).expect("checked on load");
        }
        spec.validate().map_err(|e| usage(format!("data: {e}")))?;
        let data = generate_synthetic(&spec).map_err(runtime)?.dataset;
        let mode = Standardization::parse(&d.standardize).expect("checked on load");
        if mode == Standardization::None {
            return Ok(LoadedData {
                data,
                standardization: None,
            });
        }
        let (data, report) = feature_standardize(&data, mode).map_err(runtime)?;
        return Ok(LoadedData {
            data,
            standardization: Some(StandardizationRecord {
                mode: mode.name().into(),
                shift: report.shift,
                scale: report.scale,
            }),
        });
    }
    let path = d.path.clone().expect("checked on load");
    let path = if path.is_relative() { base.join(path) } else { path };
    let args = DataArgs {
        data: path,
        format: d.format.clone(),
        header: d.header,
        label_column: d.label_column.clone(),
        map_binary: d.map_binary,
        dimension: d.dimension,
        standardize: d.standardize.clone(),
        manifest: None,
    };
    load_data(&args, loss)
}

fn cmd_benchmark(a: &BenchmarkArgs, err: &mut dyn std::io::Write) -> Result<String, CliError> {
    let cfg = BenchmarkConfig::load(&a.config).map_err(|e| match e {
        crate::config::ConfigError::Read { .. } => runtime(e),
        crate::config::ConfigError::Invalid { .. } => usage(e.to_string()),
    })?;
    if a.jobs == Some(0) {
        return Err(usage("--jobs: must be at least 1"));
    }
    let base = a.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let loaded = data_from_config(&cfg, &base)?;
    let model = ModelArgs {
        loss: cfg.problem.loss.clone(),
        regularizer: cfg.problem.regularizer.clone(),
        strength: cfg.problem.strength,
    };
    let problem = build_problem(loaded.data, &model)?;
    let n = problem.n() as f64;
    let budget = if cfg.budget.noiseless {
        None
    } else {
        Some(budget(cfg.budget.epsilon, cfg.budget.delta.unwrap_or(1.0 / (n * n)))?)
    };
    let grid = GridSpec {
        algorithms: cfg.grids(),
        repeats: cfg.repeats,
        budget,
        master_seed: a.seed.unwrap_or(cfg.master_seed),
        batch_size: cfg.batch_size,
        trace: parse_trace(&cfg.trace).expect("checked on load"),
    };
    let out_dir = a
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(|o| if o.is_relative() { base.join(o) } else { o.clone() }))
        .ok_or_else(|| usage("no output directory: pass --out or set output in the config"))?;

    let reference = solve_reference(&problem, cfg.problem.tolerance).map_err(runtime)?;
    if !reference.converged {
        let _ = writeln!(err, "warning: reference solver stopped at the step cap (residual {:e})", reference.residual);
    }
    let result = run_grid(&problem, reference.objective, &grid, a.jobs.or(cfg.jobs)).map_err(runtime)?;
    emit_results(&result, &out_dir).map_err(runtime)?;
    if let Some(st) = &loaded.standardization {
        let text = toml::to_string(st).map_err(runtime)?;
        io::write_file(&out_dir.join("standardization.toml"), text.as_bytes()).map_err(runtime)?;
    }

    let mut s = String::new();
    let _ = writeln!(s, "problem = {} (n = {}, p = {})", result.problem, problem.n(), problem.p());
    let _ = writeln!(s, "f_star = {:?}", result.f_star);
    let _ = writeln!(s, "initial_error = {:?}", result.initial_error);
    let _ = writeln!(s, "{:<12} {:>8} {:>10} {:>10} {:>12} {:>12} {:>12}", "algorithm", "passes", "step", "clip", "err_min", "err_mean", "err_max");
    for alg in &result.algorithms {
        if let Some(b) = alg.best_point() {
            let last = b.ticks.last().expect("every point has a final tick");
            let _ = writeln!(
                s,
                "{:<12} {:>8} {:>10.3e} {:>10.3e} {:>12.4e} {:>12.4e} {:>12.4e}",
                alg.algorithm.name(),
                b.passes,
                b.step_size,
                b.clipping,
                last.min,
                last.mean,
                last.max
            );
        }
    }
    if result.algorithms.len() >= 2 {
        for pair in bench::compare(&result).pairs {
            let _ = writeln!(
                s,
                "{} vs {}: mean {:.4e} vs {:.4e}, wins on {:.0}% of seeds",
                pair.reference.name(),
                pair.other.name(),
                pair.reference_mean,
                pair.other_mean,
                100.0 * pair.win_fraction
            );
        }
    }
    let _ = writeln!(s, "results = {}", out_dir.display());
    Ok(s)
}

fn cmd_profile(a: &ProfileArgs, err: &mut dyn std::io::Write) -> Result<String, CliError> {
    if !(a.quantile > 0.0 && a.quantile <= 1.0) {
        return Err(usage("--quantile: must lie in (0, 1]"));
    }
    if !(a.tolerance > 0.0) {
        return Err(usage("--tolerance: must be positive"));
    }
    let loss = model_loss(&a.model)?;
    let loaded = load_data(&a.data, loss)?;
    let problem = build_problem(loaded.data, &a.model)?;
    let reference = solve_reference(&problem, a.tolerance).map_err(runtime)?;
    if !reference.converged {
        let _ = writeln!(err, "warning: reference solver stopped at the step cap (residual {:e})", reference.residual);
    }
    let prof = solution_profile(&reference.w, a.quantile).map_err(runtime)?;
    let mut s = String::from("bin_lower,bin_upper,count\n");
    for b in &prof.histogram {
        let _ = writeln!(s, "{:?},{:?},{}", b.lower, b.upper, b.count);
    }
    let _ = writeln!(s, "# p = {}", reference.w.len());
    let _ = writeln!(s, "# objective = {:?}", reference.objective);
    let _ = writeln!(s, "# converged = {}", reference.converged);
    let _ = writeln!(s, "# nonzeros = {}", prof.profile.tau_at(0.0));
    let _ = writeln!(s, "# quantile_level = {:?}", prof.quantile_level);
    let _ = writeln!(s, "# quantile = {:?}", prof.quantile);
    let _ = writeln!(s, "# tau = {}", prof.tau);
    let _ = writeln!(s, "# alpha = {:?}", prof.alpha);
    Ok(s)
}

#[cfg(test)]
mod tests {
    use std::path::{Path, PathBuf};

    use super::run;

    struct Output {
        code: u8,
        stdout: String,
        stderr: String,
    }

    fn dpgcd(args: &[&str]) -> Output {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("dpgcd").chain(args.iter().copied()), &mut out, &mut err);
        Output {
            code,
            stdout: String::from_utf8(out).unwrap(),
            stderr: String::from_utf8(err).unwrap(),
        }
    }

    fn stdout(o: &Output) -> String {
        o.stdout.clone()
    }

    fn stderr(o: &Output) -> String {
        o.stderr.clone()
    }

    fn workspace_root() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
    }

    fn generate_small(dir: &Path, preset: &str, n: &str, p: &str) -> PathBuf {
        let o = dpgcd(&[
            "generate",
            "--preset",
            preset,
            "--n",
            n,
            "--p",
            p,
            "--seed",
            "3",
            "--out",
            dir.to_str().unwrap(),
            "--name",
            "small",
        ]);
        assert!(o.code == 0, "{}", stderr(&o));
        dir.join("small.csv")
    }

    #[test]
    fn help_and_version_exit_zero() {
        let o = dpgcd(&["--help"]);
        assert_eq!(o.code, 0);
        for sub in ["generate", "calibrate", "solve", "benchmark", "profile"] {
            assert!(stdout(&o).contains(sub), "help lists {sub}");
        }
        assert_eq!(dpgcd(&["--version"]).code, 0);
        assert_eq!(dpgcd(&["solve", "--help"]).code, 0);
    }

    #[test]
    fn unknown_flags_are_usage_errors() {
        assert_eq!(dpgcd(&["solve", "--bogus"]).code, 2);
        assert_eq!(dpgcd(&[]).code, 2);
    }

    #[test]
    fn calibrate_matches_closed_form() {
        let o = dpgcd(&[
            "calibrate", "--epsilon", "1", "--delta", "1e-6", "-T", "100", "--n", "1000", "--lipschitz", "1,2", "--closed-form",
        ]);
        assert!(o.code == 0, "{}", stderr(&o));
        let text = stdout(&o);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("algorithm,epsilon,delta,T,coordinate,scale"));
        let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
        assert_eq!(rows.len(), 2);
        let s0: f64 = rows[0][5].parse().unwrap();
        let s1: f64 = rows[1][5].parse().unwrap();
        let eps = 1.0 / (4.0 * (100.0 * (1e6f64).ln()).sqrt());
        assert!((s0 - 2.0 / (1000.0 * eps)).abs() < 1e-12 * s0);
        assert!((s1 - 2.0 * s0).abs() < 1e-12 * s1);
    }

    #[test]
    fn calibrate_rejects_bad_budgets() {
        for (e, d) in [("0", "1e-6"), ("-1", "1e-6"), ("1", "0"), ("1", "1"), ("1", "2")] {
            let o = dpgcd(&["calibrate", "--epsilon", e, "--delta", d, "-T", "10", "--n", "100"]);
            assert_eq!(o.code, 2, "eps {e} delta {d}");
        }
    }

    #[test]
    fn calibrate_baselines() {
        for alg in ["dp-cd", "dp-sgd"] {
            let o = dpgcd(&[
                "calibrate", "--algorithm", alg, "--epsilon", "1", "--delta", "1e-6", "-T", "50", "--n", "1000", "--p", "3",
                "--batch-size", "10",
            ]);
            assert!(o.code == 0, "{alg}: {}", stderr(&o));
            let rows = stdout(&o).lines().count() - 1;
            assert_eq!(rows, if alg == "dp-cd" { 3 } else { 1 });
        }
    }

    #[test]
    fn generate_writes_data_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let csv = generate_small(dir.path(), "log2", "50", "4");
        let text = std::fs::read_to_string(&csv).unwrap();
        assert_eq!(text.lines().count(), 50);
        assert!(text.lines().all(|l| l.split(',').count() == 5));
        let manifest = std::fs::read_to_string(dir.path().join("small.manifest.toml")).unwrap();
        assert!(manifest.contains("checksum"));
        let w = std::fs::read_to_string(dir.path().join("small.w_true.csv")).unwrap();
        assert_eq!(w.lines().count(), 5);

        let again = tempfile::tempdir().unwrap();
        let csv2 = generate_small(again.path(), "log2", "50", "4");
        assert_eq!(text, std::fs::read_to_string(csv2).unwrap());
    }

    #[test]
    fn generate_requires_dimensions_without_preset() {
        let dir = tempfile::tempdir().unwrap();
        let o = dpgcd(&["generate", "--out", dir.path().to_str().unwrap()]);
        assert_eq!(o.code, 2);
        let o = dpgcd(&["generate", "--preset", "nope", "--out", dir.path().to_str().unwrap()]);
        assert_eq!(o.code, 2);
    }

    #[test]
    fn solve_writes_one_trace_row_per_iteration() {
        let dir = tempfile::tempdir().unwrap();
        let csv = generate_small(dir.path(), "log2", "100", "5");
        let trace = dir.path().join("trace.csv");
        let manifest = dir.path().join("small.manifest.toml");
        let o = dpgcd(&[
            "solve",
            "--data",
            csv.to_str().unwrap(),
            "--manifest",
            manifest.to_str().unwrap(),
            "--loss",
            "logistic",
            "--regularizer",
            "l2",
            "--strength",
            "0.001",
            "-T",
            "25",
            "--clip",
            "1",
            "--trace",
            trace.to_str().unwrap(),
            "--reference",
        ]);
        assert!(o.code == 0, "{}", stderr(&o));
        let out = stdout(&o);
        assert!(out.contains("relative_error = "), "{out}");
        let t = std::fs::read_to_string(&trace).unwrap();
        let mut lines = t.lines();
        assert_eq!(lines.next(), Some("run,t,coordinate,objective,passes"));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 25);
        for (i, r) in rows.iter().enumerate() {
            let f: Vec<&str> = r.split(',').collect();
            assert_eq!(f[1].parse::<usize>().unwrap(), i);
            assert!(f[2].parse::<usize>().unwrap() < 5);
            assert!(f[3].parse::<f64>().unwrap().is_finite());
        }
    }

    #[test]
    fn solve_noise_off_is_deterministic_across_seeds() {
        let dir = tempfile::tempdir().unwrap();
        let csv = generate_small(dir.path(), "log2", "60", "4");
        let run = |seed: &str| {
            let o = dpgcd(&[
                "solve", "--data", csv.to_str().unwrap(), "--noise", "off", "-T", "10", "--step", "0.5", "--seed", seed,
            ]);
            assert!(o.code == 0, "{}", stderr(&o));
            stdout(&o)
        };
        assert_eq!(run("1"), run("2"));
    }

    #[test]
    fn solve_rule_needs_l1() {
        let dir = tempfile::tempdir().unwrap();
        let csv = generate_small(dir.path(), "sparse", "40", "20");
        let base = ["solve", "--data", csv.to_str().unwrap(), "--loss", "squared", "-T", "5", "--clip", "1"];
        let o = dpgcd(&[&base[..], &["--rule", "gs-r"]].concat());
        assert_eq!(o.code, 2);
        assert!(stderr(&o).contains("--rule"));
        let o = dpgcd(&[&base[..], &["--regularizer", "l1", "--strength", "0.1"]].concat());
        assert_eq!(o.code, 2);
        let o = dpgcd(&[&base[..], &["--regularizer", "l1", "--strength", "0.1", "--rule", "gs-r"]].concat());
        assert!(o.code == 0, "{}", stderr(&o));
    }

    #[test]
    fn solve_squared_loss_without_clipping_fails_at_runtime() {
        let dir = tempfile::tempdir().unwrap();
        let csv = generate_small(dir.path(), "sparse", "40", "20");
        let o = dpgcd(&["solve", "--data", csv.to_str().unwrap(), "--loss", "squared", "-T", "5"]);
        assert_ne!(o.code, 0);
    }

    #[test]
    fn solve_reports_ragged_csv_line() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("bad.csv");
        std::fs::write(&csv, "1,2,1\n3,4,-1\n5,-1\n").unwrap();
        let o = dpgcd(&["solve", "--data", csv.to_str().unwrap(), "-T", "3"]);
        assert_eq!(o.code, 1);
        assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    }

    #[test]
    fn solve_manifest_mismatch_fails() {
        let dir = tempfile::tempdir().unwrap();
        let csv = generate_small(dir.path(), "log2", "30", "3");
        let manifest = dir.path().join("small.manifest.toml");
        let text = std::fs::read_to_string(&csv).unwrap();
        std::fs::write(&csv, text.replacen('1', "2", 1)).unwrap();
        let o = dpgcd(&[
            "solve", "--data", csv.to_str().unwrap(), "--manifest", manifest.to_str().unwrap(), "-T", "3",
        ]);
        assert_eq!(o.code, 1);
    }

    #[test]
    fn benchmark_desk_config_smoke() {
        let dir = tempfile::tempdir().unwrap();
        let config = workspace_root().join("configs/desk.toml");
        let o = dpgcd(&[
            "benchmark",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
            "--jobs",
            "2",
        ]);
        assert!(o.code == 0, "{}", stderr(&o));
        let out = stdout(&o);
        for alg in ["dp-gcd", "dp-cd", "dp-sgd"] {
            assert!(out.contains(alg), "{out}");
        }
        let curves = std::fs::read_to_string(dir.path().join("curves.csv")).unwrap();
        assert_eq!(curves.lines().next(), Some("algorithm,passes,err_min,err_mean,err_max"));
        for line in curves.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f.len(), 5);
            let (lo, mid, hi): (f64, f64, f64) = (f[2].parse().unwrap(), f[3].parse().unwrap(), f[4].parse().unwrap());
            assert!(lo <= mid && mid <= hi, "{line}");
        }
        assert!(dir.path().join("manifest.toml").exists());
        assert!(dir.path().join("best.csv").exists());
        let runs: Vec<_> = std::fs::read_dir(dir.path().join("runs")).unwrap().collect();
        assert_eq!(runs.len(), 9);
    }

    #[test]
    fn benchmark_bad_config_names_key() {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("bad.toml");
        std::fs::write(
            &config,
            "[data]\npreset = \"log2\"\n[problem]\nloss = \"logistic\"\n[dp-gcd]\npasses = [1]\nstep_sizze = [1.0]\n",
        )
        .unwrap();
        let o = dpgcd(&["benchmark", "--config", config.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
        assert_eq!(o.code, 2);
        assert!(stderr(&o).contains("step_sizze"), "{}", stderr(&o));
    }

    #[test]
    fn profile_prints_histogram_and_alpha() {
        let dir = tempfile::tempdir().unwrap();
        let csv = generate_small(dir.path(), "log2", "200", "20");
        let o = dpgcd(&[
            "profile", "--data", csv.to_str().unwrap(), "--loss", "logistic", "--regularizer", "l2", "--strength", "0.01",
        ]);
        assert!(o.code == 0, "{}", stderr(&o));
        let out = stdout(&o);
        let mut lines = out.lines();
        assert_eq!(lines.next(), Some("bin_lower,bin_upper,count"));
        let bins: Vec<&str> = out.lines().skip(1).filter(|l| !l.starts_with('#')).collect();
        assert_eq!(bins.len(), 20);
        let total: usize = bins.iter().map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
        assert_eq!(total, 20);
        assert!(out.contains("# tau = 2"));
        let alpha: f64 = out
            .lines()
            .find_map(|l| l.strip_prefix("# alpha = "))
            .unwrap()
            .parse()
            .unwrap();
        assert!(alpha >= 0.0 && alpha.is_finite());
    }
}
