//! Bounded Levenberg-Marquardt for small dense problems.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmSettings {
    pub max_iterations: usize,
    pub abs_step_tol: f64,
    pub rel_step_tol: f64,
    /// Largest allowed `|g_i|/√(JᵀJ)_ii` at a converged optimum, i.e. the
    /// distance to the stationary point in units of the parameter's σ.
    pub gradient_tol: f64,
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub x: Vec<f64>,
    pub cost: f64,
    /// Scaled projected gradient norm at `x`.
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `(JᵀJ)⁻¹` at `x`, or `None` if singular.
    pub covariance: Option<DMatrix<f64>>,
}

/// Minimises `½‖r(x)‖²` with `lower ≤ x ≤ upper`.
///
/// `eval` returns the residual vector and its Jacobian at `x`.
pub fn minimize<F>(mut eval: F, x0: &[f64], lower: &[f64], upper: &[f64], settings: LmSettings) -> LmOutcome
where
    F: FnMut(&[f64]) -> (DVector<f64>, DMatrix<f64>),
{
    let n = x0.len();
    let clamp = |x: &mut [f64]| {
        for i in 0..n {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let mut x = x0.to_vec();
    clamp(&mut x);
    let (mut r, mut j) = eval(&x);
    let mut cost = 0.5 * r.norm_squared();
    let mut lambda = -1.0;
    let mut nu = 2.0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < settings.max_iterations {
        iterations += 1;
        let jtj = j.transpose() * &j;
        let grad = j.transpose() * &r;
        let diag: Vec<f64> = (0..n).map(|i| jtj[(i, i)].max(f64::MIN_POSITIVE)).collect();
        if lambda < 0.0 {
            lambda = 1e-3;
        }
        let mut a = jtj.clone();
        for i in 0..n {
            a[(i, i)] += lambda * diag[i];
        }
        let Some(chol) = a.cholesky() else {
            lambda *= nu;
            nu *= 2.0;
            continue;
        };
        let step = chol.solve(&(-&grad));
        let mut trial = x.clone();
        for i in 0..n {
            trial[i] += step[i];
        }
        clamp(&mut trial);
        let actual: Vec<f64> = (0..n).map(|i| trial[i] - x[i]).collect();
        let (r_new, j_new) = eval(&trial);
        let cost_new = 0.5 * r_new.norm_squared();
        let dx = DVector::from_vec(actual.clone());
        // predicted decrease of the local quadratic model along the taken step
        let predicted = -(grad.dot(&dx) + 0.5 * dx.dot(&(&jtj * &dx)));
        let rho = if predicted > 0.0 { (cost - cost_new) / predicted } else { -1.0 };
        let small_step = (0..n).all(|i| actual[i].abs() <= settings.abs_step_tol + settings.rel_step_tol * x[i].abs());

        if cost_new.is_finite() && (rho > 0.0 || (cost_new <= cost && small_step)) {
            x = trial;
            r = r_new;
            j = j_new;
            cost = cost_new;
            lambda *= (1.0f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
            nu = 2.0;
            if small_step && projected_gradient(&j, &r, &x, lower, upper) <= settings.gradient_tol {
                converged = true;
                break;
            }
        } else {
            lambda *= nu;
            nu *= 2.0;
            if lambda > 1e20 {
                // no descent possible: either already stationary or stuck
                converged = projected_gradient(&j, &r, &x, lower, upper) <= settings.gradient_tol;
                break;
            }
        }
    }

    let gradient_norm = projected_gradient(&j, &r, &x, lower, upper);
    let jtj = j.transpose() * &j;
    LmOutcome { covariance: jtj.try_inverse(), x, cost, gradient_norm, iterations, converged }
}

/// `max_i |g_i|/√(JᵀJ)_ii`, ignoring components that push into an active bound.
fn projected_gradient(j: &DMatrix<f64>, r: &DVector<f64>, x: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    let grad = j.transpose() * r;
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let g = grad[i];
        let at_lower = x[i] <= lower[i] && g > 0.0;
        let at_upper = x[i] >= upper[i] && g < 0.0;
        if at_lower || at_upper {
            continue;
        }
        let curvature = j.column(i).norm_squared().sqrt().max(f64::MIN_POSITIVE);
        worst = worst.max(g.abs() / curvature);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    const SETTINGS: LmSettings = LmSettings { max_iterations: 200, abs_step_tol: 1e-12, rel_step_tol: 1e-10, gradient_tol: 1e-6 };

    #[test]
    fn rosenbrock() {
        let eval = |x: &[f64]| {
            let r = DVector::from_vec(vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]]);
            let j = DMatrix::from_row_slice(2, 2, &[-20.0 * x[0], 10.0, -1.0, 0.0]);
            (r, j)
        };
        let out = minimize(eval, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], SETTINGS);
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-8 && (out.x[1] - 1.0).abs() < 1e-8, "{:?}", out.x);
    }

    #[test]
    fn active_bound_is_respected() {
        // minimum of (x - 3)² lies outside [0, 2]
        let eval = |x: &[f64]| (DVector::from_vec(vec![x[0] - 3.0]), DMatrix::from_element(1, 1, 1.0));
        let out = minimize(eval, &[0.5], &[0.0], &[2.0], SETTINGS);
        assert!(out.converged);
        assert_eq!(out.x[0], 2.0);
    }

    #[test]
    fn linear_problem_covariance() {
        // r = A x − b; covariance must be (AᵀA)⁻¹
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 2.0]);
        let eval = |x: &[f64]| (&a * DVector::from_row_slice(x) - &b, a.clone());
        let out = minimize(eval, &[0.0, 0.0], &[-1e9; 2], &[1e9; 2], SETTINGS);
        let expected = (a.transpose() * &a).try_inverse().unwrap();
        assert!((out.covariance.unwrap() - expected).norm() < 1e-9);
    }
}
