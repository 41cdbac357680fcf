//! Levenberg-Marquardt for small dense least-squares problems.

use nalgebra::{DMatrix, DVector};

pub(crate) trait LeastSquares {
    fn n_params(&self) -> usize;
    /// Real residual vector `r(x)`.
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64>;
    /// Residuals together with the Jacobian `dr/dx`.
    fn jacobian(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>);
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LmSettings {
    pub max_iterations: usize,
    pub rel_tol: f64,
    pub grad_tol: f64,
    /// Stop once `0.5 |r|^2` falls below this.
    pub cost_floor: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct LmOutcome {
    pub x: DVector<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Cost after each accepted step, starting with the initial cost.
    pub history: Vec<f64>,
}

fn cost(r: &DVector<f64>) -> f64 {
    0.5 * r.norm_squared()
}

pub(crate) fn minimize<P: LeastSquares>(problem: &P, x0: DVector<f64>, s: &LmSettings) -> LmOutcome {
    let n = problem.n_params();
    let mut x = x0;
    let (mut r, mut jac) = problem.jacobian(&x);
    let mut c = cost(&r);
    let mut history = vec![c];
    if !c.is_finite() {
        return LmOutcome {
            x,
            cost: c,
            iterations: 0,
            converged: false,
            history,
        };
    }
    let mut mu = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < s.max_iterations {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        if grad.amax() < s.grad_tol || c < s.cost_floor {
            converged = true;
            break;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += mu * jtj[(i, i)].max(1e-12);
            }
            let Some(chol) = a.cholesky() else {
                mu *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&grad));
            let x_new = &x + &step;
            let r_new = problem.residuals(&x_new);
            let c_new = cost(&r_new);
            if c_new.is_finite() && c_new < c {
                let decrease = (c - c_new) / c.max(f64::MIN_POSITIVE);
                x = x_new;
                c = c_new;
                history.push(c);
                mu = (mu / 3.0).max(1e-15);
                accepted = true;
                let (r2, j2) = problem.jacobian(&x);
                r = r2;
                jac = j2;
                if decrease < s.rel_tol {
                    converged = true;
                }
                break;
            }
            mu *= 4.0;
            if mu > 1e16 {
                break;
            }
        }
        if converged {
            break;
        }
        if !accepted {
            // No descent direction left at machine precision: a stationary point.
            converged = true;
            break;
        }
    }
    LmOutcome {
        x,
        cost: c,
        iterations,
        converged,
        history,
    }
}
