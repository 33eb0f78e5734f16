//! Benchmark configuration files (TOML, one table per algorithm).

use std::path::{Path, PathBuf};

use dpgcd_core::{Algorithm, GreedyRule, LossKind, RegularizerKind};
use serde::Deserialize;

use crate::bench::{logspace, AlgorithmGrid, TraceDetail};

/// A list given either explicitly or as `{ logspace = [a, b, k] }`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ValueList {
    Values(Vec<f64>),
    Logspace { logspace: (f64, f64, usize) },
}

impl ValueList {
    pub fn values(&self) -> Vec<f64> {
        match self {
            ValueList::Values(v) => v.clone(),
            ValueList::Logspace { logspace: (a, b, k) } => logspace(*a, *b, *k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Synthetic preset name (`log1`, `log2`, `sparse`).
    pub preset: Option<String>,
    /// Data file; exclusive with `preset`.
    pub path: Option<PathBuf>,
    #[serde(default = "default_format")]
    pub format: String,
    #[serde(default)]
    pub header: bool,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    #[serde(default)]
    pub map_binary: bool,
    /// Feature count hint for libsvm files.
    #[serde(default)]
    pub dimension: usize,
    #[serde(default)]
    pub seed: u64,
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub sigma: Option<f64>,
    pub sparse_count: Option<usize>,
    pub noise_std: Option<f64>,
    pub label_mode: Option<String>,
    #[serde(default = "default_standardize")]
    pub standardize: String,
}

fn default_format() -> String {
    "csv".into()
}

fn default_label_column() -> String {
    "last".into()
}

fn default_standardize() -> String {
    "none".into()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub loss: String,
    #[serde(default = "default_regularizer")]
    pub regularizer: String,
    #[serde(default)]
    pub strength: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_regularizer() -> String {
    "none".into()
}

fn default_tolerance() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Defaults to `1 / n²`.
    pub delta: Option<f64>,
    #[serde(default)]
    pub noiseless: bool,
}

fn default_epsilon() -> f64 {
    1.0
}

impl Default for BudgetSection {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            delta: None,
            noiseless: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSection {
    pub passes: Option<ValueList>,
    pub step_sizes: Option<ValueList>,
    pub clipping: Option<ValueList>,
    /// Greedy rule for L1 problems (`dp-gcd` only).
    pub rule: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub name: Option<String>,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub jobs: Option<usize>,
    #[serde(default = "default_trace")]
    pub trace: String,
    pub data: DataSection,
    pub problem: ProblemSection,
    #[serde(default)]
    pub budget: BudgetSection,
    #[serde(rename = "dp-gcd")]
    pub dp_gcd: Option<AlgorithmSection>,
    #[serde(rename = "dp-cd")]
    pub dp_cd: Option<AlgorithmSection>,
    #[serde(rename = "dp-sgd")]
    pub dp_sgd: Option<AlgorithmSection>,
}

fn default_repeats() -> usize {
    10
}

fn default_batch() -> usize {
    1
}

fn default_trace() -> String {
    "ticks".into()
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

pub fn parse_loss(s: &str) -> Option<LossKind> {
    match s {
        "logistic" => Some(LossKind::Logistic),
        "squared" | "squared-error" => Some(LossKind::SquaredError),
        _ => None,
    }
}

pub fn parse_regularizer(s: &str) -> Option<RegularizerKind> {
    match s {
        "none" => Some(RegularizerKind::None),
        "l2" => Some(RegularizerKind::L2),
        "l1" => Some(RegularizerKind::L1),
        _ => None,
    }
}

pub fn parse_trace(s: &str) -> Option<TraceDetail> {
    match s {
        "ticks" => Some(TraceDetail::Ticks),
        "all" => Some(TraceDetail::All),
        _ => None,
    }
}

impl BenchmarkConfig {
    pub fn from_str(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Invalid {
            path: path.to_path_buf(),
            message: describe_toml_error(&e, text),
        })?;
        cfg.check().map_err(|message| ConfigError::Invalid {
            path: path.to_path_buf(),
            message,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_str(&text, path)
    }

    /// Value checks that the parser cannot express; messages name the key.
    fn check(&self) -> Result<(), String> {
        match (&self.data.preset, &self.data.path) {
            (Some(_), Some(_)) => return Err("data.preset and data.path are exclusive".into()),
            (None, None) => return Err("data: one of preset or path is required".into()),
            _ => {}
        }
        if !matches!(self.data.format.as_str(), "csv" | "libsvm") {
            return Err(format!("data.format: unknown format {:?}", self.data.format));
        }
        if dpgcd_core::synth::Standardization::parse(&self.data.standardize).is_none() {
            return Err(format!("data.standardize: unknown mode {:?}", self.data.standardize));
        }
        if let Some(m) = &self.data.label_mode {
            if dpgcd_core::synth::LabelMode::parse(m).is_none() {
                return Err(format!("data.label_mode: unknown mode {m:?}"));
            }
        }
        if crate::io::LabelColumn::parse(&self.data.label_column).is_none() {
            return Err(format!("data.label_column: expected first, last or an index, got {:?}", self.data.label_column));
        }
        if parse_loss(&self.problem.loss).is_none() {
            return Err(format!("problem.loss: unknown loss {:?}", self.problem.loss));
        }
        let Some(reg) = parse_regularizer(&self.problem.regularizer) else {
            return Err(format!("problem.regularizer: unknown regularizer {:?}", self.problem.regularizer));
        };
        if !(self.problem.strength >= 0.0 && self.problem.strength.is_finite()) {
            return Err("problem.strength: must be finite and nonnegative".into());
        }
        if !(self.problem.tolerance > 0.0) {
            return Err("problem.tolerance: must be positive".into());
        }
        if !self.budget.noiseless && !(self.budget.epsilon > 0.0 && self.budget.epsilon.is_finite()) {
            return Err("budget.epsilon: must be positive".into());
        }
        if let Some(d) = self.budget.delta {
            if !(d > 0.0 && d < 1.0) {
                return Err("budget.delta: must lie in (0, 1)".into());
            }
        }
        if self.repeats == 0 {
            return Err("repeats: must be at least 1".into());
        }
        if self.batch_size == 0 {
            return Err("batch_size: must be at least 1".into());
        }
        if self.jobs == Some(0) {
            return Err("jobs: must be at least 1".into());
        }
        if parse_trace(&self.trace).is_none() {
            return Err(format!("trace: expected ticks or all, got {:?}", self.trace));
        }
        if let Some(g) = &self.dp_gcd {
            match (&g.rule, reg) {
                (Some(r), RegularizerKind::L1) => {
                    if GreedyRule::parse(r).is_none() {
                        return Err(format!("dp-gcd.rule: unknown rule {r:?}"));
                    }
                }
                (Some(_), _) => return Err("dp-gcd.rule: greedy rules require regularizer = \"l1\"".into()),
                (None, RegularizerKind::L1) => {
                    return Err("dp-gcd.rule: required with regularizer = \"l1\" (gs-s, gs-r or gs-q)".into())
                }
                (None, _) => {}
            }
        }
        for (name, sec) in self.sections() {
            for (key, list) in [("passes", &sec.passes), ("step_sizes", &sec.step_sizes), ("clipping", &sec.clipping)] {
                if let Some(l) = list {
                    let v = l.values();
                    if v.is_empty() || v.iter().any(|x| !(*x > 0.0)) {
                        return Err(format!("{name}.{key}: needs positive values"));
                    }
                }
            }
            if name != "dp-gcd" && sec.rule.is_some() {
                return Err(format!("{name}.rule: only dp-gcd takes a rule"));
            }
        }
        if self.sections().is_empty() {
            return Err("no algorithm tables: add [dp-gcd], [dp-cd] or [dp-sgd]".into());
        }
        Ok(())
    }

    fn sections(&self) -> Vec<(&'static str, &AlgorithmSection)> {
        [("dp-gcd", &self.dp_gcd), ("dp-cd", &self.dp_cd), ("dp-sgd", &self.dp_sgd)]
            .into_iter()
            .filter_map(|(n, s)| s.as_ref().map(|s| (n, s)))
            .collect()
    }

    /// Algorithm grids in config order, defaults filled in.
    pub fn grids(&self) -> Vec<AlgorithmGrid> {
        self.sections()
            .into_iter()
            .map(|(name, sec)| {
                let alg = match name {
                    "dp-gcd" => match sec.rule.as_deref().and_then(GreedyRule::parse) {
                        Some(rule) => Algorithm::DpGcdProximal(rule),
                        None => Algorithm::DpGcd,
                    },
                    "dp-cd" => Algorithm::DpCd,
                    _ => Algorithm::DpSgd,
                };
                let mut grid = AlgorithmGrid::table2(alg);
                if let Some(v) = &sec.passes {
                    grid.passes = v.values();
                }
                if let Some(v) = &sec.step_sizes {
                    grid.step_sizes = v.values();
                }
                if let Some(v) = &sec.clipping {
                    grid.clipping = v.values();
                }
                grid
            })
            .collect()
    }
}

fn describe_toml_error(e: &toml::de::Error, text: &str) -> String {
    match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            format!("line {line}: {}", e.message())
        }
        None => e.message().to_string(),
    }
}
