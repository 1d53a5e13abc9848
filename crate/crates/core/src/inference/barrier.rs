//! Log-barrier for the selection region and the mode-finding problem.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::inference::InferenceMatrices;

/// Value, gradient and Hessian of the barrier
///   phi(v) = sum_j log(1 + 1/(H_j v - g_j))   on {H v > g},
/// infinite outside. The infinite branch carries zero derivatives; callers
/// must check `value.is_finite()` before using them.
#[derive(Debug, Clone)]
pub struct BarrierEval {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

pub fn barrier(v: &DVector<f64>, h: &DMatrix<f64>, g: &DVector<f64>) -> BarrierEval {
    let dim = v.len();
    let slack = h * v - g;
    if slack.iter().any(|&t| t <= 0.0) {
        return BarrierEval {
            value: f64::INFINITY,
            grad: DVector::zeros(dim),
            hess: DMatrix::zeros(dim, dim),
        };
    }
    let mut value = 0.0;
    let mut grad = DVector::zeros(dim);
    let mut hess = DMatrix::zeros(dim, dim);
    for (j, &t) in slack.iter().enumerate() {
        value += (1.0 + 1.0 / t).ln();
        let row = h.row(j);
        // d/dt log(1 + 1/t) = -1 / (t (t + 1))
        let d1 = -1.0 / (t * (t + 1.0));
        let d2 = (2.0 * t + 1.0) / (t * (t + 1.0)).powi(2);
        for a in 0..dim {
            grad[a] += d1 * row[a];
            for b in 0..dim {
                hess[(a, b)] += d2 * row[a] * row[b];
            }
        }
    }
    BarrierEval { value, grad, hess }
}

/// Result of the mode-finding solve.
#[derive(Debug, Clone)]
pub struct BarrierSolve {
    pub v: DVector<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// Minimizes 0.5 (v - c)' Q (v - c) + phi_{H,g}(v) from a strictly feasible
/// start. Damped Newton with backtracking that rejects any step leaving the
/// interior; falls back to a gradient step when the Newton system cannot be
/// factored.
pub fn minimize_quadratic_barrier(
    q_form: &DMatrix<f64>,
    c: &DVector<f64>,
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    start: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<BarrierSolve> {
    let dim = c.len();
    if dim == 0 {
        return Ok(BarrierSolve {
            v: DVector::zeros(0),
            iterations: 0,
            grad_norm: 0.0,
        });
    }
    let objective = |v: &DVector<f64>| {
        let d = v - c;
        0.5 * d.dot(&(q_form * &d)) + barrier(v, h, g).value
    };

    let mut v = start.clone();
    let mut eval = barrier(&v, h, g);
    if !eval.value.is_finite() {
        return Err(Error::InfeasibleStart);
    }
    let mut value = objective(&v);
    let mut grad_norm = f64::INFINITY;

    for iter in 0..max_iter {
        let grad = q_form * (&v - c) + &eval.grad;
        grad_norm = grad.norm();
        if grad_norm <= tol {
            return Ok(BarrierSolve {
                v,
                iterations: iter,
                grad_norm,
            });
        }
        let hess = q_form + &eval.hess;
        let direction = match hess.cholesky() {
            Some(chol) => -chol.solve(&grad),
            // Ill-conditioned Newton system: plain gradient descent step.
            None => -&grad / grad_norm.max(1.0),
        };
        let slope = grad.dot(&direction);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..70 {
            let trial = &v + alpha * &direction;
            let trial_eval = barrier(&trial, h, g);
            if trial_eval.value.is_finite() {
                let trial_value = {
                    let d = &trial - c;
                    0.5 * d.dot(&(q_form * &d)) + trial_eval.value
                };
                // Near the minimum the objective decrease drops below f64
                // resolution while Newton still contracts the gradient, so a
                // strict gradient-norm decrease also counts as progress.
                let trial_grad_norm = (q_form * (&trial - c) + &trial_eval.grad).norm();
                if trial_value <= value + 1e-4 * alpha * slope || trial_grad_norm <= 0.9 * grad_norm
                {
                    v = trial;
                    eval = trial_eval;
                    value = trial_value;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            // No acceptable step along this direction: either converged to
            // working precision or genuinely stuck.
            let grad = q_form * (&v - c) + &eval.grad;
            grad_norm = grad.norm();
            if grad_norm <= tol * 10.0 {
                return Ok(BarrierSolve {
                    v,
                    iterations: iter,
                    grad_norm,
                });
            }
            return Err(Error::NonConvergence {
                what: "barrier solve (line search stalled)",
                iterations: iter,
                residual: grad_norm,
                last_iterate: Some(v.as_slice().to_vec()),
            });
        }
    }
    Err(Error::NonConvergence {
        what: "barrier solve",
        iterations: max_iter,
        residual: grad_norm,
        last_iterate: Some(v.as_slice().to_vec()),
    })
}

/// Solves for the mode V-hat of the conditional normalizer:
/// argmin 0.5 (V - P beta_E - q)' Delta^{-1} (V - P beta_E - q) + phi(V),
/// starting at the observed V.
pub fn solve_restricted_optimizer(mats: &InferenceMatrices) -> Result<BarrierSolve> {
    let c = &mats.p_mat * &mats.beta_e + &mats.q_vec;
    minimize_quadratic_barrier(
        &mats.delta_inv,
        &c,
        &mats.h,
        &mats.g,
        &mats.v_observed,
        1e-8,
        200,
    )
}
