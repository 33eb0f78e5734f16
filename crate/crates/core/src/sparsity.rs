//! Quasi-sparsity of parameter vectors: how many entries exceed a threshold.

use alloc::vec::Vec;

use libm::fabs;

use crate::error::{invalid, Result};

/// `(α, τ)` profile of a vector: `τ` entries have magnitude above `α`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiSparsityProfile {
    pub alpha: f64,
    pub tau: usize,
    /// `|w_j|` sorted ascending.
    pub magnitudes: Vec<f64>,
}

impl QuasiSparsityProfile {
    /// Number of entries strictly above `alpha`.
    pub fn tau_at(&self, alpha: f64) -> usize {
        let below = self.magnitudes.partition_point(|m| *m <= alpha);
        self.magnitudes.len() - below
    }

    /// Smallest `α` for which at most `tau` entries exceed `α`.
    pub fn alpha_for(&self, tau: usize) -> f64 {
        let p = self.magnitudes.len();
        if tau >= p {
            0.0
        } else {
            self.magnitudes[p - 1 - tau]
        }
    }
}

pub fn quasi_sparsity(w: &[f64], alpha: f64) -> Result<QuasiSparsityProfile> {
    if !(alpha >= 0.0) {
        return Err(invalid("alpha", "must be nonnegative"));
    }
    let mut magnitudes: Vec<f64> = w.iter().map(|v| fabs(*v)).collect();
    magnitudes.sort_by(f64::total_cmp);
    let mut profile = QuasiSparsityProfile {
        alpha,
        tau: 0,
        magnitudes,
    };
    profile.tau = profile.tau_at(alpha);
    Ok(profile)
}

/// `π_α(w)`: zeroes every entry with `|w_j| ≤ α`.
pub fn threshold(w: &[f64], alpha: f64) -> Vec<f64> {
    w.iter()
        .map(|v| if fabs(*v) > alpha { *v } else { 0.0 })
        .collect()
}

/// Number of nonzero entries.
pub fn nnz(w: &[f64]) -> usize {
    w.iter().filter(|v| **v != 0.0).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn definition_examples() {
        let w = [0.5, 0.01, -0.02, 2.0];
        let prof = quasi_sparsity(&w, 0.1).unwrap();
        assert_eq!(prof.tau, 2);
        assert_eq!(threshold(&w, 0.1), vec![0.5, 0.0, 0.0, 2.0]);

        let w = [0.0, 1.0, 0.0, -3.0, 1e-300];
        assert_eq!(quasi_sparsity(&w, 0.0).unwrap().tau, 3);
        assert_eq!(quasi_sparsity(&w, 3.0).unwrap().tau, 0);
        assert_eq!(quasi_sparsity(&w, 10.0).unwrap().tau, 0);
        assert!(quasi_sparsity(&w, -1.0).is_err());
    }

    #[test]
    fn alpha_for_tau() {
        let prof = quasi_sparsity(&[0.0, 0.0, 0.0, 5.0], 0.0).unwrap();
        assert_eq!(prof.alpha_for(0), 5.0);
        assert_eq!(prof.alpha_for(1), 0.0);
        assert_eq!(prof.alpha_for(10), 0.0);
    }

    proptest! {
        #[test]
        fn tau_is_nonincreasing(w in proptest::collection::vec(-5.0f64..5.0, 0..40),
                                a in 0.0f64..6.0, b in 0.0f64..6.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let p1 = quasi_sparsity(&w, lo).unwrap();
            let p2 = quasi_sparsity(&w, hi).unwrap();
            prop_assert!(p2.tau <= p1.tau);
            prop_assert!(p1.tau <= w.len());
            prop_assert_eq!(p1.tau, nnz(&threshold(&w, lo)));
            let alpha = p1.alpha_for(p1.tau);
            prop_assert!(p1.tau_at(alpha) <= p1.tau);
        }
    }
}
