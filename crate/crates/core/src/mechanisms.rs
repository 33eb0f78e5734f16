//! Seeded noise primitives and report-noisy-argmax.
//!
//! The generator is a statistical ChaCha8 stream: runs are reproducible bit
//! for bit from their seed, which is what the experiments need. It is not a
//! source of cryptographically secure privacy noise.

use alloc::vec::Vec;

use libm::{log, sqrt};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

/// Seeded random stream used for every noise draw.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoiseRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl NoiseRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Position in the underlying stream, in 32-bit words.
    pub fn position(&self) -> u128 {
        self.inner.get_word_pos()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn uniform_open(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    #[inline]
    pub(crate) fn laplace(&mut self, scale: f64) -> f64 {
        if scale == 0.0 {
            return 0.0;
        }
        laplace_inverse_cdf(self.uniform_open(), scale)
    }

    #[inline]
    pub(crate) fn gaussian(&mut self, std: f64) -> f64 {
        if std == 0.0 {
            return 0.0;
        }
        let z: f64 = self.inner.sample(StandardNormal);
        std * z
    }
}

/// Expands a master seed and a run index into an independent run seed
/// (splitmix64 finalizer over the pair).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Quantile function of `Lap(0, scale)` at `u ∈ (0, 1)`.
pub fn laplace_inverse_cdf(u: f64, scale: f64) -> f64 {
    if u < 0.5 {
        scale * log(2.0 * u)
    } else {
        -scale * log(2.0 * (1.0 - u))
    }
}

pub fn sample_laplace(rng: &mut NoiseRng, scale: f64) -> Result<f64> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(invalid("scale", "must be positive and finite"));
    }
    Ok(rng.laplace(scale))
}

pub fn sample_gaussian(rng: &mut NoiseRng, std: f64) -> Result<f64> {
    if !(std > 0.0 && std.is_finite()) {
        return Err(invalid("std", "must be positive and finite"));
    }
    Ok(rng.gaussian(std))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    /// Laplace noise on scores used only to pick a coordinate.
    Selection,
    /// Laplace noise on the released gradient coordinate.
    Release,
    Gaussian,
}

/// One recorded noise draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseDraw {
    pub coordinate: usize,
    pub kind: NoiseKind,
    pub value: f64,
    pub scale: f64,
}

/// Outcome of report-noisy-argmax.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyArgmax {
    pub index: usize,
    pub noisy_scores: Vec<f64>,
    pub noise: Vec<f64>,
}

/// Perturbs each score with `Lap(scales_j)` and returns
/// `argmax_j |score_j + χ_j| / sqrt(weights_j)`, ties to the lowest index.
/// A zero scale means that entry is used exactly.
pub fn report_noisy_argmax(
    scores: &[f64],
    scales: &[f64],
    weights: &[f64],
    rng: &mut NoiseRng,
) -> Result<NoisyArgmax> {
    let p = scores.len();
    if p == 0 {
        return Err(Error::EmptyInput("scores"));
    }
    for len in [scales.len(), weights.len()] {
        if len != p {
            return Err(Error::DimensionMismatch { expected: p, found: len });
        }
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(invalid("weights", "must be positive"));
    }
    if scales.iter().any(|s| !(*s >= 0.0)) {
        return Err(invalid("scales", "must be nonnegative"));
    }
    let noise: Vec<f64> = scales.iter().map(|s| rng.laplace(*s)).collect();
    let noisy_scores: Vec<f64> = scores.iter().zip(&noise).map(|(s, e)| s + e).collect();
    let index = argmax_scaled(&noisy_scores, weights);
    Ok(NoisyArgmax {
        index,
        noisy_scores,
        noise,
    })
}

/// `argmax_j |v_j| / sqrt(weights_j)`, lowest index on ties.
pub fn argmax_scaled(values: &[f64], weights: &[f64]) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (j, (v, w)) in values.iter().zip(weights).enumerate() {
        let s = v.abs() / sqrt(*w);
        if s > best_val {
            best_val = s;
            best = j;
        }
    }
    best
}
