//! Datasets, losses, regularizers and the per-coordinate regularity
//! constants that drive both step sizes and noise calibration.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, fabs, log1p, sqrt};

use crate::error::{invalid, Error, Result};

/// Parameter vector of a linear model.
pub type WeightVector = Vec<f64>;

/// Dense design matrix with labels.
///
/// Features are kept both row-major (full-gradient sweeps) and column-major
/// (single-coordinate updates).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    n: usize,
    p: usize,
    rows: Vec<f64>,
    cols: Vec<f64>,
    labels: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from a row-major `n × p` feature buffer.
    pub fn from_rows(
        name: impl Into<String>,
        n: usize,
        p: usize,
        features: Vec<f64>,
        labels: Vec<f64>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput("dataset has no records"));
        }
        if p == 0 {
            return Err(Error::EmptyInput("dataset has no features"));
        }
        if features.len() != n * p {
            return Err(Error::DimensionMismatch {
                expected: n * p,
                found: features.len(),
            });
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: labels.len(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "features" });
        }
        if labels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "labels" });
        }
        let mut cols = vec![0.0; n * p];
        for i in 0..n {
            for j in 0..p {
                cols[j * n + i] = features[i * p + j];
            }
        }
        Ok(Self {
            name: name.into(),
            n,
            p,
            rows: features,
            cols,
            labels,
        })
    }

    /// Convenience constructor from nested rows.
    pub fn from_row_vecs(
        name: impl Into<String>,
        rows: &[Vec<f64>],
        labels: Vec<f64>,
    ) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(n * p);
        for row in rows {
            if row.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        Self::from_rows(name, n, p, flat, labels)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.p..(i + 1) * self.p]
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.cols[j * self.n..(j + 1) * self.n]
    }

    /// Row-major feature buffer.
    pub fn features(&self) -> &[f64] {
        &self.rows
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i * self.p + j]
    }

    /// Returns a copy with replaced features, keeping labels and name.
    pub fn with_features(&self, features: Vec<f64>) -> Result<Self> {
        Self::from_rows(self.name.clone(), self.n, self.p, features, self.labels.clone())
    }

    /// Returns a copy with replaced labels.
    pub fn with_labels(&self, labels: Vec<f64>) -> Result<Self> {
        Self::from_rows(self.name.clone(), self.n, self.p, self.rows.clone(), labels)
    }
}

/// Per-record loss of a linear model, as a function of the margin `z = xᵀw`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// `log(1 + exp(-y z))`, labels in {-1, +1}.
    Logistic,
    /// `½ (z - y)²`.
    SquaredError,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Logistic => "logistic",
            LossKind::SquaredError => "squared",
        }
    }

    #[inline]
    pub fn value(self, z: f64, y: f64) -> f64 {
        match self {
            LossKind::Logistic => {
                let m = y * z;
                log1p(exp(-fabs(m))) + (-m).max(0.0)
            }
            LossKind::SquaredError => {
                let r = z - y;
                0.5 * r * r
            }
        }
    }

    /// Derivative of the loss with respect to the margin.
    #[inline]
    pub fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            LossKind::Logistic => -y * sigmoid(-y * z),
            LossKind::SquaredError => z - y,
        }
    }

    /// Upper bound on the second derivative with respect to the margin.
    pub fn curvature_bound(self) -> f64 {
        match self {
            LossKind::Logistic => 0.25,
            LossKind::SquaredError => 1.0,
        }
    }

    fn validate_labels(self, labels: &[f64]) -> Result<()> {
        if self == LossKind::Logistic {
            if let Some(&bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
                return Err(Error::InvalidLabel {
                    value: bad,
                    loss: "logistic",
                });
            }
        }
        Ok(())
    }
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + exp(-t))
    } else {
        let e = exp(t);
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegularizerKind {
    None,
    L2,
    L1,
}

/// Separable regularizer. L2 (`λ/2 ‖w‖²`) is part of the smooth objective;
/// L1 (`λ ‖w‖₁`) is the nonsmooth term handled through its proximal operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularizer {
    pub kind: RegularizerKind,
    pub strength: f64,
}

impl Regularizer {
    pub const NONE: Regularizer = Regularizer {
        kind: RegularizerKind::None,
        strength: 0.0,
    };

    pub fn l2(strength: f64) -> Result<Self> {
        Self::new(RegularizerKind::L2, strength)
    }

    pub fn l1(strength: f64) -> Result<Self> {
        Self::new(RegularizerKind::L1, strength)
    }

    pub fn new(kind: RegularizerKind, strength: f64) -> Result<Self> {
        if !(strength >= 0.0 && strength.is_finite()) {
            return Err(invalid("strength", "must be finite and nonnegative"));
        }
        let strength = if kind == RegularizerKind::None { 0.0 } else { strength };
        Ok(Self { kind, strength })
    }

    pub fn is_smooth(&self) -> bool {
        self.kind != RegularizerKind::L1
    }

    pub fn l2_strength(&self) -> f64 {
        if self.kind == RegularizerKind::L2 {
            self.strength
        } else {
            0.0
        }
    }

    pub fn l1_strength(&self) -> f64 {
        if self.kind == RegularizerKind::L1 {
            self.strength
        } else {
            0.0
        }
    }

    /// Value of the nonsmooth part `ψ(w)`.
    pub fn nonsmooth_value(&self, w: &[f64]) -> f64 {
        let l1 = self.l1_strength();
        if l1 == 0.0 {
            return 0.0;
        }
        l1 * w.iter().map(|v| fabs(*v)).sum::<f64>()
    }

    /// `prox_{γψ_j}(v)`; the identity unless the regularizer is L1.
    pub fn prox_coordinate(&self, v: f64, gamma: f64) -> Result<f64> {
        if !(gamma > 0.0) {
            return Err(invalid("gamma", "must be positive"));
        }
        Ok(soft_threshold(v, gamma * self.l1_strength()))
    }
}

/// `sign(v) · max(|v| - threshold, 0)`.
#[inline]
pub fn soft_threshold(v: f64, threshold: f64) -> f64 {
    if v > threshold {
        v - threshold
    } else if v < -threshold {
        v + threshold
    } else {
        0.0
    }
}

/// Regularized linear-model ERM problem with its coordinate-wise constants.
#[derive(Debug, Clone)]
pub struct Problem {
    data: Arc<Dataset>,
    loss: LossKind,
    regularizer: Regularizer,
    smoothness: Vec<f64>,
    column_bound: Vec<f64>,
    record_norm_bound: f64,
}

impl Problem {
    pub fn new(data: impl Into<Arc<Dataset>>, loss: LossKind, regularizer: Regularizer) -> Result<Self> {
        let data = data.into();
        loss.validate_labels(data.labels())?;
        let n = data.n();
        let curvature = loss.curvature_bound() / n as f64;
        let l2 = regularizer.l2_strength();
        let mut smoothness: Vec<f64> = (0..data.p())
            .map(|j| curvature * data.column(j).iter().map(|x| x * x).sum::<f64>() + l2)
            .collect();
        // zero columns would give M_j = 0; floor relative to the largest constant
        let max_m = smoothness.iter().cloned().fold(0.0, f64::max);
        let floor = if max_m > 0.0 { max_m * f64::EPSILON } else { 1.0 };
        for m in &mut smoothness {
            if *m < floor {
                *m = floor;
            }
        }
        let column_bound = (0..data.p())
            .map(|j| data.column(j).iter().map(|x| fabs(*x)).fold(0.0, f64::max))
            .collect();
        let record_norm_bound = (0..n)
            .map(|i| sqrt(data.row(i).iter().map(|x| x * x).sum::<f64>()))
            .fold(0.0, f64::max);
        Ok(Self {
            data,
            loss,
            regularizer,
            smoothness,
            column_bound,
            record_norm_bound,
        })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn shared_data(&self) -> Arc<Dataset> {
        Arc::clone(&self.data)
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub fn regularizer(&self) -> Regularizer {
        self.regularizer
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn p(&self) -> usize {
        self.data.p()
    }

    /// Coordinate-wise smoothness constants `M_j` of the smooth part.
    pub fn smoothness(&self) -> &[f64] {
        &self.smoothness
    }

    /// Per-coordinate clipping thresholds derived from one factor:
    /// `c_j = c · sqrt(M_j / max M)`.
    pub fn coordinate_thresholds(&self, clipping_factor: f64) -> Vec<f64> {
        let max_m = self.smoothness.iter().cloned().fold(0.0, f64::max);
        self.smoothness
            .iter()
            .map(|m| clipping_factor * sqrt(m / max_m))
            .collect()
    }

    /// Bound on `|∇_j ℓ(w; d_i)|` over records and parameters for the
    /// smooth per-record loss, if one exists (logistic: `max_i |x_ij|`).
    pub fn natural_coordinate_bounds(&self) -> Option<&[f64]> {
        match self.loss {
            LossKind::Logistic => Some(&self.column_bound),
            LossKind::SquaredError => None,
        }
    }

    /// Bound on the Euclidean norm of any per-record loss gradient, if one
    /// exists (logistic: `max_i ‖x_i‖`).
    pub fn natural_record_norm_bound(&self) -> Option<f64> {
        match self.loss {
            LossKind::Logistic => Some(self.record_norm_bound),
            LossKind::SquaredError => None,
        }
    }

    /// Effective component-Lipschitz constants `L_j` used for sensitivity.
    ///
    /// Logistic loss: `max_i |x_ij|`, tightened by clipping thresholds when
    /// given. Squared loss has no global constant, so the (finite) clipping
    /// thresholds are the constants.
    pub fn lipschitz_constants(&self, thresholds: Option<&[f64]>) -> Result<Vec<f64>> {
        if let Some(c) = thresholds {
            self.check_len(c.len())?;
            if c.iter().any(|v| !(*v > 0.0)) {
                return Err(invalid("thresholds", "must be positive"));
            }
        }
        match (self.loss, thresholds) {
            (LossKind::Logistic, None) => Ok(self.column_bound.clone()),
            (LossKind::Logistic, Some(c)) => Ok(self
                .column_bound
                .iter()
                .zip(c)
                .map(|(l, c)| l.min(*c))
                .collect()),
            (LossKind::SquaredError, Some(c)) if c.iter().all(|v| v.is_finite()) => Ok(c.to_vec()),
            (LossKind::SquaredError, _) => Err(Error::MissingClipping),
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                found: len,
            });
        }
        Ok(())
    }

    /// `X w`.
    pub fn margins(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_len(w.len())?;
        Ok((0..self.n())
            .map(|i| dot(self.data.row(i), w))
            .collect())
    }

    /// Smooth part `f(w)`: loss average plus the L2 term.
    pub fn smooth_objective(&self, w: &[f64]) -> Result<f64> {
        let z = self.margins(w)?;
        finite(self.smooth_objective_at(w, &z), "objective")
    }

    /// Nonsmooth part `ψ(w)`.
    pub fn nonsmooth_objective(&self, w: &[f64]) -> Result<f64> {
        self.check_len(w.len())?;
        Ok(self.regularizer.nonsmooth_value(w))
    }

    /// Full objective `f(w) + ψ(w)`.
    pub fn objective(&self, w: &[f64]) -> Result<f64> {
        let z = self.margins(w)?;
        finite(self.objective_at(w, &z), "objective")
    }

    /// Smooth objective from precomputed margins `z = X w`.
    pub fn smooth_objective_at(&self, w: &[f64], z: &[f64]) -> f64 {
        let y = self.data.labels();
        let loss: f64 = z
            .iter()
            .zip(y)
            .map(|(z, y)| self.loss.value(*z, *y))
            .sum::<f64>()
            / self.n() as f64;
        let l2 = self.regularizer.l2_strength();
        if l2 == 0.0 {
            loss
        } else {
            loss + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>()
        }
    }

    pub fn objective_at(&self, w: &[f64], z: &[f64]) -> f64 {
        self.smooth_objective_at(w, z) + self.regularizer.nonsmooth_value(w)
    }

    /// Exact gradient of the smooth part.
    pub fn gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        let z = self.margins(w)?;
        let mut g = vec![0.0; self.p()];
        let unclipped = vec![f64::INFINITY; self.p()];
        self.clipped_gradient_at(w, &z, &unclipped, &mut g);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "gradient" });
        }
        Ok(g)
    }

    /// `∇_j ℓ(w; d_i)` of the smooth per-record loss (L2 term excluded).
    pub fn per_record_coordinate_gradient(&self, w: &[f64], i: usize, j: usize) -> Result<f64> {
        self.check_len(w.len())?;
        if i >= self.n() {
            return Err(Error::IndexOutOfRange { index: i, len: self.n() });
        }
        if j >= self.p() {
            return Err(Error::IndexOutOfRange { index: j, len: self.p() });
        }
        let z = dot(self.data.row(i), w);
        Ok(self.data.get(i, j) * self.loss.derivative(z, self.data.labels()[i]))
    }

    /// Derivative of record `i`'s loss at margin `z`.
    #[inline]
    pub fn record_derivative(&self, z: f64, i: usize) -> f64 {
        self.loss.derivative(z, self.data.labels()[i])
    }

    /// Smooth gradient with every per-record coordinate gradient clipped to
    /// `[-c_j, c_j]` before averaging. The L2 term is added unclipped.
    pub fn clipped_gradient_at(&self, w: &[f64], z: &[f64], thresholds: &[f64], out: &mut [f64]) {
        let p = self.p();
        out.iter_mut().for_each(|v| *v = 0.0);
        let features = self.data.features();
        let labels = self.data.labels();
        for (i, (zi, yi)) in z.iter().zip(labels).enumerate() {
            let d = self.loss.derivative(*zi, *yi);
            if d == 0.0 {
                continue;
            }
            let row = &features[i * p..(i + 1) * p];
            for ((acc, x), c) in out.iter_mut().zip(row).zip(thresholds) {
                *acc += (x * d).max(-c).min(*c);
            }
        }
        let inv_n = 1.0 / self.n() as f64;
        let l2 = self.regularizer.l2_strength();
        for (g, wj) in out.iter_mut().zip(w) {
            *g = *g * inv_n + l2 * wj;
        }
    }

    /// Single clipped gradient coordinate from precomputed margins.
    pub fn clipped_coordinate_gradient_at(&self, w_j: f64, z: &[f64], j: usize, threshold: f64) -> f64 {
        let labels = self.data.labels();
        let sum: f64 = self
            .data
            .column(j)
            .iter()
            .zip(z)
            .zip(labels)
            .map(|((x, zi), yi)| (x * self.loss.derivative(*zi, *yi)).max(-threshold).min(threshold))
            .sum();
        sum / self.n() as f64 + self.regularizer.l2_strength() * w_j
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn finite(v: f64, what: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { what })
    }
}

/// `‖w‖_{M,1}`, `‖w‖_{M⁻¹,∞}` and `‖w‖_{M,2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedNorms {
    pub m1: f64,
    pub m_inv_inf: f64,
    pub m2: f64,
}

pub fn weighted_norms(w: &[f64], m: &[f64]) -> Result<WeightedNorms> {
    if w.len() != m.len() {
        return Err(Error::DimensionMismatch {
            expected: m.len(),
            found: w.len(),
        });
    }
    if m.iter().any(|v| !(*v > 0.0)) {
        return Err(invalid("weights", "must be positive"));
    }
    let mut m1 = 0.0;
    let mut inf: f64 = 0.0;
    let mut sq = 0.0;
    for (wj, mj) in w.iter().zip(m) {
        let root = sqrt(*mj);
        m1 += root * fabs(*wj);
        inf = inf.max(fabs(*wj) / root);
        sq += mj * wj * wj;
    }
    Ok(WeightedNorms {
        m1,
        m_inv_inf: inf,
        m2: sqrt(sq),
    })
}
