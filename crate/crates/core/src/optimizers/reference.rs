use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;

use super::{CoordinateState, GreedyRule};
use crate::error::{invalid, Error, Result};
use crate::problem::{soft_threshold, Problem, WeightVector};

/// Coordinate-step cap of [`solve_reference`].
pub const DEFAULT_STEP_CAP: usize = 1_000_000;

/// Non-private optimum computed by [`solve_reference`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub w: WeightVector,
    pub objective: f64,
    /// False when the step cap was reached first; `w` is then the last
    /// iterate.
    pub converged: bool,
    pub steps: usize,
    /// `max_j M_j^{-1/2} |minimal-norm subgradient_j|` at `w`.
    pub residual: f64,
}

/// Cyclic proximal coordinate descent with steps `1 / M_j`, run until the
/// scaled optimality residual drops below `tolerance`.
pub fn solve_reference(problem: &Problem, tolerance: f64) -> Result<ReferenceSolution> {
    solve_reference_with_cap(problem, tolerance, DEFAULT_STEP_CAP)
}

pub fn solve_reference_with_cap(problem: &Problem, tolerance: f64, cap: usize) -> Result<ReferenceSolution> {
    if !(tolerance > 0.0) {
        return Err(invalid("tolerance", "must be positive"));
    }
    let p = problem.p();
    let m = problem.smoothness();
    let l1 = problem.regularizer().l1_strength();
    let unclipped = vec![f64::INFINITY; p];
    let mut state = CoordinateState::zero(problem);
    let mut grad = vec![0.0; p];
    let mut steps = 0;

    let residual_at = |state: &CoordinateState, grad: &mut Vec<f64>| {
        problem.clipped_gradient_at(&state.w, &state.z, &unclipped, grad);
        grad.iter()
            .zip(&state.w)
            .zip(m)
            .map(|((g, w), m)| GreedyRule::GsS.score(*g, *w, *m, l1))
            .fold(0.0, f64::max)
    };

    let mut residual = residual_at(&state, &mut grad);
    while residual >= tolerance && steps < cap {
        let mut largest_move = 0.0f64;
        for j in 0..p {
            if steps == cap {
                break;
            }
            let g = problem.clipped_coordinate_gradient_at(state.w[j], &state.z, j, f64::INFINITY);
            let value = soft_threshold(state.w[j] - g / m[j], l1 / m[j]);
            if !value.is_finite() {
                return Err(Error::Diverged { iteration: steps });
            }
            largest_move = largest_move.max(sqrt(m[j]) * (value - state.w[j]).abs());
            state.set(problem, j, value);
            steps += 1;
        }
        if largest_move < tolerance || steps == cap {
            residual = residual_at(&state, &mut grad);
        }
        if !residual.is_finite() {
            return Err(Error::NonFinite { what: "reference residual" });
        }
    }

    let objective = problem.objective_at(&state.w, &state.z);
    if !objective.is_finite() {
        return Err(Error::NonFinite { what: "reference objective" });
    }
    Ok(ReferenceSolution {
        w: state.w,
        objective,
        converged: residual < tolerance,
        steps,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Dataset, LossKind, Regularizer};

    #[test]
    fn interpolation() {
        let data = Dataset::from_row_vecs("i", &[vec![1.0]], vec![2.0]).unwrap();
        let prob = Problem::new(data, LossKind::SquaredError, Regularizer::NONE).unwrap();
        let s = solve_reference(&prob, 1e-10).unwrap();
        assert!(s.converged);
        assert!((s.w[0] - 2.0).abs() < 1e-12);
        assert!(s.objective.abs() < 1e-20);
    }

    #[test]
    fn one_dimensional_lasso() {
        let data = Dataset::from_row_vecs("l", &[vec![1.0]], vec![2.0]).unwrap();
        let prob = Problem::new(data, LossKind::SquaredError, Regularizer::l1(1.0).unwrap()).unwrap();
        let s = solve_reference(&prob, 1e-10).unwrap();
        assert!((s.w[0] - 1.0).abs() < 1e-12);
        assert!((s.objective - 1.5).abs() < 1e-12);
    }

    #[test]
    fn separable_logistic_with_l2() {
        let data = Dataset::from_row_vecs("s", &[vec![1.0, 0.5], vec![-1.0, 0.2]], vec![1.0, -1.0]).unwrap();
        let prob = Problem::new(data, LossKind::Logistic, Regularizer::l2(0.1).unwrap()).unwrap();
        let s = solve_reference(&prob, 1e-12).unwrap();
        assert!(s.converged);
        let g = prob.gradient(&s.w).unwrap();
        let norm = sqrt(g.iter().map(|v| v * v).sum::<f64>());
        assert!(norm < 1e-8, "{norm}");
    }

    #[test]
    fn cap_is_reported() {
        let data = Dataset::from_row_vecs("c", &[vec![1.0, 0.9], vec![0.9, 1.0], vec![0.3, -0.2]], vec![1.0, 2.0, 0.0])
            .unwrap();
        let prob = Problem::new(data, LossKind::SquaredError, Regularizer::NONE).unwrap();
        let s = solve_reference_with_cap(&prob, 1e-14, 3).unwrap();
        assert!(!s.converged);
        assert_eq!(s.steps, 3);
        assert!(s.residual > 0.0);
        assert!(solve_reference(&prob, 0.0).is_err());
    }
}
