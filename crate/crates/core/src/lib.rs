//! Differentially private greedy coordinate descent for empirical risk
//! minimization.
//!
//! The crate is `no_std` (with `alloc`) and holds the numerical side of the
//! toolkit: linear-model objectives with per-coordinate regularity
//! constants, Laplace/Gaussian noise and report-noisy-argmax, privacy
//! calibration (advanced composition and Rényi accounting), the private
//! optimizers (greedy CD, its proximal variant, random CD and SGD) and a
//! noiseless reference solver. File formats, the benchmark harness and the
//! command-line tool live in the `dpgcd` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod accountant;
pub mod error;
pub mod mechanisms;
pub mod optimizers;
pub mod problem;
pub mod sparsity;
pub mod synth;

pub use accountant::{GaussianCalibration, NoiseCalibration, PrivacyBudget, RdpCurve};
pub use error::{Error, Result};
pub use mechanisms::NoiseRng;
pub use optimizers::{
    Algorithm, GreedyRule, IterationRecord, OptimizerConfig, OptimizerRun, Recording,
};
pub use problem::{Dataset, LossKind, Problem, Regularizer, RegularizerKind, WeightVector};
pub use sparsity::QuasiSparsityProfile;
