//! Synthetic datasets, feature standardization and solution profiles.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use libm::{ceil, exp, fabs, sqrt};

use crate::error::{invalid, Result};
use crate::mechanisms::NoiseRng;
use crate::problem::{Dataset, WeightVector};
use crate::sparsity::{quasi_sparsity, QuasiSparsityProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LabelMode {
    /// `y = X w_true + ε`.
    Regression,
    /// `sign(X w_true + ε)` in `{-1, +1}` (zero maps to `+1`).
    SignBinarized,
}

impl LabelMode {
    pub fn name(self) -> &'static str {
        match self {
            LabelMode::Regression => "regression",
            LabelMode::SignBinarized => "sign",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "regression" => Some(LabelMode::Regression),
            "sign" => Some(LabelMode::SignBinarized),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub name: String,
    pub n: usize,
    pub p: usize,
    /// `σ` of the log-normal law of `|w_true_j|` (`μ = 0`).
    pub w_sigma: f64,
    /// Number of nonzero entries of `w_true`; `None` for a dense vector.
    pub sparse_count: Option<usize>,
    pub noise_std: f64,
    pub label_mode: LabelMode,
    pub seed: u64,
}

impl SyntheticSpec {
    pub const PRESETS: [&'static str; 3] = ["log1", "log2", "sparse"];

    /// `log1`, `log2` (1000 × 100, dense, sign labels) or `sparse`
    /// (1000 × 1000, 10 nonzeros, regression labels).
    pub fn preset(name: &str, seed: u64) -> Option<Self> {
        let (n, p, sigma, sparse, mode) = match name {
            "log1" => (1000, 100, 1.0, None, LabelMode::SignBinarized),
            "log2" => (1000, 100, 2.0, None, LabelMode::SignBinarized),
            "sparse" => (1000, 1000, 1.0, Some(10), LabelMode::Regression),
            _ => return None,
        };
        Some(Self {
            name: name.into(),
            n,
            p,
            w_sigma: sigma,
            sparse_count: sparse,
            noise_std: 1.0,
            label_mode: mode,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(invalid("n, p", "must be at least 1"));
        }
        if !(self.w_sigma >= 0.0 && self.w_sigma.is_finite()) {
            return Err(invalid("w_sigma", "must be finite and nonnegative"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(invalid("noise_std", "must be finite and nonnegative"));
        }
        if let Some(k) = self.sparse_count {
            if k > self.p {
                return Err(invalid("sparse_count", "cannot exceed p"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub w_true: WeightVector,
}

/// Draws `X` with i.i.d. `N(0, 1)` entries, `w_true` with log-normal
/// magnitudes and uniform random signs, and labels `X w_true + ε`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let (n, p) = (spec.n, spec.p);
    let mut rng = NoiseRng::new(spec.seed);
    let draw_weight = |rng: &mut NoiseRng| {
        let magnitude = exp(spec.w_sigma * rng.gaussian(1.0));
        if rng.next_u64() >> 63 == 0 {
            magnitude
        } else {
            -magnitude
        }
    };
    let w_true = match spec.sparse_count {
        None => (0..p).map(|_| draw_weight(&mut rng)).collect(),
        Some(k) => {
            let mut order: Vec<usize> = (0..p).collect();
            for i in 0..k {
                let pick = i + rng.index(p - i);
                order.swap(i, pick);
            }
            let mut w = vec![0.0; p];
            for &j in &order[..k] {
                w[j] = draw_weight(&mut rng);
            }
            w
        }
    };
    let features: Vec<f64> = (0..n * p).map(|_| rng.gaussian(1.0)).collect();
    let labels: Vec<f64> = features
        .chunks_exact(p)
        .map(|row| {
            let y = crate::problem::dot(row, &w_true) + rng.gaussian(spec.noise_std);
            match spec.label_mode {
                LabelMode::Regression => y,
                LabelMode::SignBinarized => {
                    if y >= 0.0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
            }
        })
        .collect();
    Ok(SyntheticData {
        dataset: Dataset::from_rows(spec.name.as_str(), n, p, features, labels)?,
        w_true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Standardization {
    None,
    /// Divide each column by its largest magnitude.
    UnitMaxAbs,
    /// Center and divide by the (population) standard deviation.
    ZScore,
}

impl Standardization {
    pub fn name(self) -> &'static str {
        match self {
            Standardization::None => "none",
            Standardization::UnitMaxAbs => "unitMaxAbs",
            Standardization::ZScore => "zscore",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Standardization::None),
            "unitMaxAbs" => Some(Standardization::UnitMaxAbs),
            "zscore" => Some(Standardization::ZScore),
            _ => None,
        }
    }
}

/// Per-column transform `x ↦ (x - shift) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationReport {
    pub mode: Standardization,
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
    /// Columns that could not be scaled (all zero, or constant under
    /// z-scoring) and were left as they were.
    pub skipped: Vec<usize>,
}

pub fn feature_standardize(data: &Dataset, mode: Standardization) -> Result<(Dataset, StandardizationReport)> {
    let (n, p) = (data.n(), data.p());
    let mut shift = vec![0.0; p];
    let mut scale = vec![1.0; p];
    let mut skipped = Vec::new();
    for j in 0..p {
        let col = data.column(j);
        match mode {
            Standardization::None => {}
            Standardization::UnitMaxAbs => {
                let m = col.iter().fold(0.0f64, |a, x| a.max(fabs(*x)));
                if m > 0.0 {
                    scale[j] = m;
                } else {
                    skipped.push(j);
                }
            }
            Standardization::ZScore => {
                let mean = col.iter().sum::<f64>() / n as f64;
                let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
                let sd = sqrt(var);
                if sd > 0.0 && sd > f64::EPSILON * mean.abs() {
                    shift[j] = mean;
                    scale[j] = sd;
                } else {
                    skipped.push(j);
                }
            }
        }
    }
    let features: Vec<f64> = data
        .features()
        .chunks_exact(p)
        .flat_map(|row| row.iter().zip(&shift).zip(&scale).map(|((x, s), c)| (x - s) / c))
        .collect();
    let out = data.with_features(features)?;
    Ok((
        out,
        StandardizationReport {
            mode,
            shift,
            scale,
            skipped,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

/// Magnitude profile of a solution vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionProfile {
    pub quantile_level: f64,
    /// Nearest-rank `q`-quantile of `|w_j|`.
    pub quantile: f64,
    /// `⌊p / 10⌋`.
    pub tau: usize,
    /// Smallest `α` for which `w` is `(α, τ)`-quasi-sparse.
    pub alpha: f64,
    pub profile: QuasiSparsityProfile,
    pub histogram: Vec<HistogramBin>,
}

pub const HISTOGRAM_BINS: usize = 20;

pub fn solution_profile(w: &[f64], quantile_level: f64) -> Result<SolutionProfile> {
    if w.is_empty() {
        return Err(crate::error::Error::EmptyInput("solution"));
    }
    if !(quantile_level > 0.0 && quantile_level <= 1.0) {
        return Err(invalid("quantile", "must lie in (0, 1]"));
    }
    let p = w.len();
    let tau = p / 10;
    let mut profile = quasi_sparsity(w, 0.0)?;
    let alpha = profile.alpha_for(tau);
    profile.alpha = alpha;
    profile.tau = profile.tau_at(alpha);
    let rank = (ceil(quantile_level * p as f64) as usize).clamp(1, p);
    let quantile = profile.magnitudes[rank - 1];

    let top = profile.magnitudes[p - 1];
    let width = if top > 0.0 { top / HISTOGRAM_BINS as f64 } else { 1.0 };
    let mut histogram: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
        .map(|b| HistogramBin {
            lower: b as f64 * width,
            upper: (b + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for m in &profile.magnitudes {
        let b = ((m / width) as usize).min(HISTOGRAM_BINS - 1);
        histogram[b].count += 1;
    }
    Ok(SolutionProfile {
        quantile_level,
        quantile,
        tau,
        alpha,
        profile,
        histogram,
    })
}
