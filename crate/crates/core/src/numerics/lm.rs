//! Levenberg-Marquardt for real residuals.
//!
//! The trust-region constraint `||S step|| <= delta` is realized in damped
//! form: each trial step solves
//!
//! ```text
//! (J^T J + lambda * S^T S) step = -J^T r
//! ```
//!
//! where `S` holds the running maximum of the Jacobian column norms (Moré
//! scaling). An accepted step shrinks `lambda` by `damping_down_factor`, a
//! rejected one grows it by `damping_up_factor`; growing `lambda` is the same
//! as shrinking the trust radius.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Consecutive Cholesky failures tolerated before giving up on a point.
const MAX_FACTORIZATION_FAILURES: usize = 40;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub initial_damping: f64,
    pub damping_up_factor: f64,
    pub damping_down_factor: f64,
    pub max_iterations: usize,
    /// Step-norm threshold, in the units of the parameters (radians here).
    pub step_tolerance: f64,
    /// Threshold on the decrease of the residual norm over one accepted step.
    pub residual_tolerance: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            initial_damping: 1e-3,
            damping_up_factor: 10.0,
            damping_down_factor: 0.1,
            max_iterations: 100,
            step_tolerance: 1e-8,
            residual_tolerance: 1e-12,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.initial_damping > 0.0
            && self.damping_up_factor > 1.0
            && self.damping_down_factor > 0.0
            && self.damping_down_factor < 1.0
            && self.max_iterations > 0
            && self.step_tolerance > 0.0
            && self.residual_tolerance > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("bad LM config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// The gradient `J^T r` vanished at the current point.
    ZeroGradient,
    StepTolerance,
    ResidualTolerance,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: DVector<f64>,
    pub residual_norm: f64,
    pub initial_residual_norm: f64,
    /// Jacobian evaluations.
    pub iterations: usize,
    pub accepted_steps: usize,
    /// Residual norm at the start and after every accepted step.
    pub history: Vec<f64>,
    pub termination: Termination,
}

/// Minimizes `||residual_fn(x)||` starting from `x0`.
///
/// `jacobian_fn(x)` must return a matrix with one row per residual entry and
/// one column per parameter. Only steps that strictly decrease the residual
/// norm are accepted, so the returned norm never exceeds the starting one.
/// A damped normal matrix that stays unfactorizable yields
/// [`Error::Convergence`] carrying the best point found.
pub fn lm_minimize<R, J>(
    mut residual_fn: R,
    mut jacobian_fn: J,
    x0: &DVector<f64>,
    config: &LmConfig,
) -> Result<LmOutcome>
where
    R: FnMut(&DVector<f64>) -> DVector<f64>,
    J: FnMut(&DVector<f64>) -> DMatrix<f64>,
{
    config.validate()?;
    let n = x0.len();
    let mut x = x0.clone();
    let mut r = residual_fn(&x);
    let mut cost = r.norm();
    if !cost.is_finite() {
        return Err(Error::invalid("residual is not finite at the starting point"));
    }

    let mut out = LmOutcome {
        params: x.clone(),
        residual_norm: cost,
        initial_residual_norm: cost,
        iterations: 0,
        accepted_steps: 0,
        history: vec![cost],
        termination: Termination::MaxIterations,
    };
    if n == 0 {
        out.termination = Termination::ZeroGradient;
        return Ok(out);
    }

    let mut lambda = config.initial_damping;
    let mut scale = DVector::<f64>::zeros(n);

    'outer: while out.iterations < config.max_iterations {
        let jac = jacobian_fn(&x);
        if jac.shape() != (r.len(), n) {
            return Err(Error::invalid(format!(
                "jacobian is {:?}, expected ({}, {n})",
                jac.shape(),
                r.len()
            )));
        }
        out.iterations += 1;

        let grad = jac.transpose() * &r;
        if grad.iter().all(|g| *g == 0.0) {
            out.termination = Termination::ZeroGradient;
            break;
        }
        for (j, col) in jac.column_iter().enumerate() {
            scale[j] = scale[j].max(col.norm());
        }
        let diag = scale.map(|s| if s > 0.0 { s * s } else { 1.0 });
        let jtj = jac.transpose() * &jac;

        let mut failures = 0;
        loop {
            let mut damped = jtj.clone();
            for j in 0..n {
                damped[(j, j)] += lambda * diag[j];
            }
            let Some(chol) = damped.cholesky() else {
                failures += 1;
                lambda *= config.damping_up_factor;
                if failures >= MAX_FACTORIZATION_FAILURES || !lambda.is_finite() {
                    return Err(Error::Convergence {
                        iterations: out.iterations,
                        best_residual_norm: cost,
                        best_params: x.iter().copied().collect(),
                        reason: "damped normal matrix is singular".into(),
                    });
                }
                continue;
            };
            let step = -chol.solve(&grad);
            let step_norm = step.norm();
            let candidate = &x + &step;
            let r_new = residual_fn(&candidate);
            let cost_new = r_new.norm();

            if cost_new.is_finite() && cost_new < cost {
                let decrease = cost - cost_new;
                x = candidate;
                r = r_new;
                cost = cost_new;
                lambda *= config.damping_down_factor;
                out.accepted_steps += 1;
                out.history.push(cost);
                if step_norm < config.step_tolerance {
                    out.termination = Termination::StepTolerance;
                    break 'outer;
                }
                if decrease < config.residual_tolerance {
                    out.termination = Termination::ResidualTolerance;
                    break 'outer;
                }
                continue 'outer;
            }

            lambda *= config.damping_up_factor;
            if step_norm < config.step_tolerance || !lambda.is_finite() {
                out.termination = Termination::StepTolerance;
                break 'outer;
            }
        }
    }

    out.params = x;
    out.residual_norm = cost;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]])
    }

    fn rosenbrock_jac(x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[-20.0 * x[0], 10.0, -1.0, 0.0])
    }

    /// Newton's method with backtracking on f = 0.5 ||r||^2, using the exact
    /// Hessian. Independent of the LM code path.
    fn newton_oracle(mut x: [f64; 2]) -> [f64; 2] {
        let f = |x: [f64; 2]| {
            let a = 10.0 * (x[1] - x[0] * x[0]);
            let b = 1.0 - x[0];
            0.5 * (a * a + b * b)
        };
        for _ in 0..500 {
            let (x0, x1) = (x[0], x[1]);
            let g0 = -200.0 * x0 * (x1 - x0 * x0) - (1.0 - x0);
            let g1 = 100.0 * (x1 - x0 * x0);
            if g0.hypot(g1) < 1e-14 {
                break;
            }
            let h00 = 600.0 * x0 * x0 - 200.0 * x1 + 1.0;
            let h01 = -200.0 * x0;
            let h11 = 100.0;
            let det = h00 * h11 - h01 * h01;
            let (mut d0, mut d1) = if det > 0.0 && h00 > 0.0 {
                (-(h11 * g0 - h01 * g1) / det, -(-h01 * g0 + h00 * g1) / det)
            } else {
                (-g0, -g1)
            };
            let mut t = 1.0;
            let f0 = f(x);
            while f([x0 + t * d0, x1 + t * d1]) > f0 - 1e-4 * t * (g0 * d0 + g1 * d1).abs() && t > 1e-12 {
                t *= 0.5;
            }
            d0 *= t;
            d1 *= t;
            x = [x0 + d0, x1 + d1];
        }
        x
    }

    #[test]
    fn linear_residual_reaches_target() {
        let c = DVector::from_vec(vec![0.3, -1.7, 2.2]);
        let cc = c.clone();
        let out = lm_minimize(
            move |x| x - &cc,
            |_| DMatrix::identity(3, 3),
            &DVector::from_vec(vec![5.0, 5.0, -5.0]),
            &LmConfig::default(),
        )
        .unwrap();
        assert!((&out.params - &c).norm() < 1e-10);
        // First accepted step already removes all but lambda/(1+lambda) of the error.
        assert!(out.history[1] / out.history[0] < 1.01e-3);
        assert!(out.accepted_steps <= 4);
    }

    #[test]
    fn rosenbrock_matches_newton_oracle() {
        let oracle = newton_oracle([-1.2, 1.0]);
        assert!((oracle[0] - 1.0).abs() < 1e-8 && (oracle[1] - 1.0).abs() < 1e-8);
        let out = lm_minimize(
            rosenbrock,
            rosenbrock_jac,
            &DVector::from_vec(vec![-1.2, 1.0]),
            &LmConfig::default(),
        )
        .unwrap();
        assert!(out.residual_norm < 1e-8, "residual {}", out.residual_norm);
        assert!((out.params[0] - oracle[0]).abs() < 1e-6);
        assert!((out.params[1] - oracle[1]).abs() < 1e-6);
    }

    #[test]
    fn constant_residual_stays_put() {
        let x0 = DVector::from_vec(vec![0.4, 0.9]);
        let out = lm_minimize(
            |_| DVector::from_vec(vec![1.0, 2.0, 3.0]),
            |_| DMatrix::zeros(3, 2),
            &x0,
            &LmConfig::default(),
        )
        .unwrap();
        assert_eq!(out.params, x0);
        assert_eq!(out.accepted_steps, 0);
        assert_eq!(out.termination, Termination::ZeroGradient);
    }

    #[test]
    fn accepted_norms_never_increase() {
        let out = lm_minimize(
            rosenbrock,
            rosenbrock_jac,
            &DVector::from_vec(vec![-1.2, 1.0]),
            &LmConfig::default(),
        )
        .unwrap();
        assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(out.residual_norm <= out.initial_residual_norm);
    }

    #[test]
    fn nan_jacobian_reports_best_point() {
        let err = lm_minimize(
            |x| x.clone(),
            |_| DMatrix::from_element(2, 2, f64::NAN),
            &DVector::from_vec(vec![1.0, 1.0]),
            &LmConfig::default(),
        )
        .unwrap_err();
        match err {
            Error::Convergence { best_params, best_residual_norm, .. } => {
                assert_eq!(best_params, vec![1.0, 1.0]);
                assert!((best_residual_norm - 2f64.sqrt()).abs() < 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = LmConfig { damping_down_factor: 1.5, ..LmConfig::default() };
        assert!(lm_minimize(|x| x.clone(), |_| DMatrix::identity(1, 1), &DVector::zeros(1), &cfg).is_err());
    }
}
