//! Post-selection inference conditioned on a refined selection event.
//!
//! Given a converged selection, the stationarity conditions of the solver
//! express the stacked randomization vector as an affine function of the
//! least-squares estimates and the free magnitudes V (with the per-predictor
//! sums Gamma and the inactive subgradients held fixed by conditioning).
//! This module assembles the Gaussian ingredients of that representation,
//! solves the barrier-penalized quadratic for the mode of the normalizer,
//! and evaluates the estimating equations for the approximate selective MLE
//! and its observed information.

mod barrier;
mod jacobian;
mod mle;

pub use barrier::{
    barrier, minimize_quadratic_barrier, solve_restricted_optimizer, BarrierEval, BarrierSolve,
};
pub use jacobian::{jacobian_determinant, stationarity_map};
pub use mle::{confidence_intervals, selective_mle, z_quantile, InferenceResult, SolveDiagnostics};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{build_stacking_plan, MultiTaskDataset, SelectionOutcome, StackingPlan};

/// One confidence interval row, labeled by (task, feature).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub task: usize,
    pub feature: usize,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub stderr: f64,
    pub method: String,
    pub alpha: f64,
}

impl IntervalRecord {
    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn excludes_zero(&self) -> bool {
        !self.covers(0.0)
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Per-task least squares on the selected columns.
#[derive(Debug)]
pub struct TaskLeastSquares {
    pub active: Vec<usize>,
    /// X_E' X_E.
    pub gram: DMatrix<f64>,
    /// Naive estimate (X_E' X_E)^(-1) X_E' y.
    pub beta_e: DVector<f64>,
    /// Ancillary projection X'(I - X_E X_E^dagger) y, original feature order.
    pub beta_perp: DVector<f64>,
}

/// Least squares and ancillary statistic for one task.
pub fn task_least_squares(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    active: &[usize],
    task: usize,
) -> Result<TaskLeastSquares> {
    let x_e = x.select_columns(active.iter());
    let gram = x_e.transpose() * &x_e;
    let beta_e = if active.is_empty() {
        DVector::zeros(0)
    } else {
        let chol = gram.clone().cholesky().ok_or_else(|| {
            // Rank from the pivoted QR: diagonal of R above threshold.
            let qr = x_e.clone().col_piv_qr();
            let r = qr.r();
            let scale = r[(0, 0)].abs().max(1.0);
            let rank = (0..r.nrows().min(r.ncols()))
                .take_while(|&i| r[(i, i)].abs() > 1e-10 * scale)
                .count();
            Error::RankDeficient {
                task,
                columns: active.to_vec(),
                rank,
            }
        })?;
        chol.solve(&(x_e.transpose() * y))
    };
    let fitted = &x_e * &beta_e;
    let beta_perp = x.transpose() * (y - fitted);
    Ok(TaskLeastSquares {
        active: active.to_vec(),
        gram,
        beta_e,
        beta_perp,
    })
}

/// Stacked naive estimates and ancillary projections for the given active
/// sets (task-major; the ancillary stack orders each task's rows active
/// first, then inactive ascending, matching the stacked randomization).
pub fn least_squares_and_ancillary(
    dataset: &MultiTaskDataset,
    active_sets: &[Vec<usize>],
) -> Result<(DVector<f64>, DVector<f64>)> {
    let p = dataset.p();
    let q: usize = active_sets.iter().map(|a| a.len()).sum();
    let mut beta_e = DVector::zeros(q);
    let mut beta_perp = DVector::zeros(dataset.k() * p);
    let mut at = 0;
    for (k, active) in active_sets.iter().enumerate() {
        let ls = task_least_squares(&dataset.task(k).x, &dataset.task(k).y, active, k)?;
        beta_e.rows_mut(at, active.len()).copy_from(&ls.beta_e);
        at += active.len();
        let order = row_order(p, active);
        for (row, &j) in order.iter().enumerate() {
            beta_perp[k * p + row] = ls.beta_perp[j];
        }
    }
    Ok((beta_e, beta_perp))
}

/// Residual-based noise estimate on the selected model:
/// sigma^2 = ||y - X_E X_E^dagger y||^2 / (n - q).
pub fn plugin_sigma(x_e: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    let n = y.len();
    let q = x_e.ncols();
    if n <= q {
        return Err(Error::DegreesOfFreedomExhausted { task: 0, n, q });
    }
    let residual = if q == 0 {
        y.clone()
    } else {
        let gram = x_e.transpose() * x_e;
        let chol = gram.cholesky().ok_or(Error::NotPositiveDefinite {
            name: "X_E' X_E (plug-in noise estimate)",
        })?;
        y - x_e * chol.solve(&(x_e.transpose() * y))
    };
    Ok((residual.norm_squared() / (n - q) as f64).sqrt())
}

/// Everything the estimating equations need, for either the multi-task
/// refined event or the per-task orthant event.
#[derive(Debug, Clone)]
pub struct InferenceMatrices {
    /// Block diagonal of -X^(k)' X^(k)_{E_k}, rows active-first per task.
    pub c1: DMatrix<f64>,
    /// -C1 plus the ridge on the active rows (sign-free).
    pub c0: DMatrix<f64>,
    /// Coefficient of the free variable in the affine stationarity map.
    pub c2: DMatrix<f64>,
    /// Constant part of the affine map (holds Gamma, U and beta_perp).
    pub f: DVector<f64>,
    pub delta: DMatrix<f64>,
    pub delta_inv: DMatrix<f64>,
    pub p_mat: DMatrix<f64>,
    pub q_vec: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub sigma_inv: DMatrix<f64>,
    /// Unconditional covariance of the stacked naive estimates,
    /// Diag(sigma_k^2 (X_E' X_E)^{-1}).
    pub sigma_beta: DMatrix<f64>,
    pub l_mat: DMatrix<f64>,
    pub m_vec: DVector<f64>,
    /// Observed stacked naive estimates.
    pub beta_e: DVector<f64>,
    /// Observed ancillary stack (task-blocked, active rows first).
    pub beta_perp: DVector<f64>,
    /// Constraint pair: the selection region is {v : H v >= g}.
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    /// Observed value of the free variable (strictly feasible).
    pub v_observed: DVector<f64>,
    /// Observed randomization stack in the same row order as C1/C2/f.
    pub omega_stack: DVector<f64>,
    /// Diagonal of Omega^{-1}.
    pub omega_inv_diag: DVector<f64>,
    /// Per-task noise scales used for sigma_beta.
    pub sigmas: Vec<f64>,
    /// (task, feature) labels of the q stacked coordinates.
    pub labels: Vec<(usize, usize)>,
}

impl InferenceMatrices {
    pub fn q(&self) -> usize {
        self.beta_e.len()
    }

    pub fn v_dim(&self) -> usize {
        self.v_observed.len()
    }

    /// Rebuilds the randomization stack from the affine representation:
    /// C1 beta_E + C2 V + f. For a converged selection this must reproduce
    /// the observed draws.
    pub fn reconstruct_omega(&self) -> DVector<f64> {
        &self.c1 * &self.beta_e + &self.c2 * &self.v_observed + &self.f
    }
}

/// Row order within one task block: active features (selection order), then
/// the inactive complement ascending.
fn row_order(p: usize, active: &[usize]) -> Vec<usize> {
    let mut order = active.to_vec();
    let mut is_active = vec![false; p];
    for &j in active {
        is_active[j] = true;
    }
    order.extend((0..p).filter(|&j| !is_active[j]));
    order
}

/// Raw ingredients of one affine stationarity representation.
pub(crate) struct AffineSystem {
    pub c1: DMatrix<f64>,
    pub c0: DMatrix<f64>,
    pub c2: DMatrix<f64>,
    pub f: DVector<f64>,
    pub omega_inv_diag: DVector<f64>,
    pub sigma_beta: DMatrix<f64>,
    pub sigma_beta_inv: DMatrix<f64>,
    pub beta_e: DVector<f64>,
    pub beta_perp: DVector<f64>,
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub v_observed: DVector<f64>,
    pub omega_stack: DVector<f64>,
    pub sigmas: Vec<f64>,
    pub labels: Vec<(usize, usize)>,
}

/// Derives (Delta, P, q, Sigma, L, m) from an affine system.
pub(crate) fn finish_assembly(sys: AffineSystem) -> Result<InferenceMatrices> {
    let AffineSystem {
        c1,
        c0,
        c2,
        f,
        omega_inv_diag,
        sigma_beta,
        sigma_beta_inv,
        beta_e,
        beta_perp,
        h,
        g,
        v_observed,
        omega_stack,
        sigmas,
        labels,
    } = sys;

    let scale_rows = |m: &DMatrix<f64>| -> DMatrix<f64> {
        let mut out = m.clone();
        for (i, mut row) in out.row_iter_mut().enumerate() {
            row *= omega_inv_diag[i];
        }
        out
    };
    let winv_c2 = scale_rows(&c2);
    let winv_c1 = scale_rows(&c1);
    let v_dim = c2.ncols();

    let delta_inv = c2.transpose() * &winv_c2;
    let delta = if v_dim == 0 {
        DMatrix::zeros(0, 0)
    } else {
        delta_inv
            .clone()
            .cholesky()
            .ok_or(Error::SingularDelta)?
            .inverse()
    };
    // M = C2' Omega^{-1} C1; P = -Delta M; P' Delta^{-1} P = M' Delta M.
    let m_cross = c2.transpose() * &winv_c1;
    let p_mat = -(&delta * &m_cross);
    let c2w_f = c2.transpose() * omega_inv_diag.component_mul(&f);
    let q_vec = -(&delta * &c2w_f);

    let sigma_inv =
        &sigma_beta_inv + c1.transpose() * &winv_c1 - m_cross.transpose() * &delta * &m_cross;
    let sigma = sigma_inv
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { name: "Sigma^{-1}" })?
        .inverse();
    let l_mat = &sigma * &sigma_beta_inv;
    let c1w_f = c1.transpose() * omega_inv_diag.component_mul(&f);
    let m_vec = &sigma * (m_cross.transpose() * (&delta * &c2w_f)) - &sigma * c1w_f;

    Ok(InferenceMatrices {
        c1,
        c0,
        c2,
        f,
        delta,
        delta_inv,
        p_mat,
        q_vec,
        sigma,
        sigma_inv,
        sigma_beta,
        l_mat,
        m_vec,
        beta_e,
        beta_perp,
        h,
        g,
        v_observed,
        omega_stack,
        omega_inv_diag,
        sigmas,
        labels,
    })
}

/// Assembles the conditional-likelihood ingredients for a multi-task
/// selection outcome under its stacking plan.
///
/// `sigmas` are the per-task noise scales of the post-selection model
/// (known in simulations, plugged in otherwise); the randomization
/// covariance comes from the scales recorded in the outcome.
pub fn assemble_inference_matrices(
    dataset: &MultiTaskDataset,
    outcome: &SelectionOutcome,
    plan: &StackingPlan,
    sigmas: &[f64],
) -> Result<InferenceMatrices> {
    let p = dataset.p();
    let kk = dataset.k();
    let q = outcome.total_active();
    let v_dim = plan.v_dim();
    if sigmas.len() != kk {
        return Err(Error::DimensionMismatch {
            what: "noise scales",
            expected: kk,
            got: sigmas.len(),
        });
    }

    let active_sets: Vec<Vec<usize>> = outcome.tasks.iter().map(|t| t.active.clone()).collect();
    let (beta_e, beta_perp) = least_squares_and_ancillary(dataset, &active_sets)?;

    // Stacked sign diagonal and per-coordinate offsets.
    let mut signs = DVector::zeros(q);
    let mut offsets = Vec::with_capacity(kk);
    let mut at = 0;
    for task in &outcome.tasks {
        offsets.push(at);
        signs.rows_mut(at, task.q()).copy_from(&task.signs);
        at += task.q();
    }

    let rows = kk * p;
    let mut c1 = DMatrix::zeros(rows, q);
    let mut c0 = DMatrix::zeros(rows, q);
    let mut f = DVector::zeros(rows);
    let mut omega_stack = DVector::zeros(rows);
    let mut omega_inv_diag = DVector::zeros(rows);
    let mut sigma_beta = DMatrix::zeros(q, q);
    let mut sigma_beta_inv = DMatrix::zeros(q, q);

    for (k, task) in outcome.tasks.iter().enumerate() {
        let x = &dataset.task(k).x;
        let q_k = task.q();
        let x_e = x.select_columns(task.active.iter());
        let cross = x.transpose() * &x_e; // p x q_k, original row order
        let order = row_order(p, &task.active);
        let eps = outcome.ridges[k];
        let omega_var = outcome.omega_stds[k] * outcome.omega_stds[k];
        if omega_var <= 0.0 {
            return Err(Error::InvalidConfig {
                message: format!("task {k}: selection was not randomized (omega variance 0)"),
            });
        }

        for (row, &j) in order.iter().enumerate() {
            let r = k * p + row;
            for col in 0..q_k {
                c1[(r, offsets[k] + col)] = -cross[(j, col)];
                c0[(r, offsets[k] + col)] = cross[(j, col)];
            }
            if row < q_k {
                c0[(r, offsets[k] + row)] += eps;
            }
            // f starts from the subgradient part: Lambda * (s; u).
            let lambda_j = outcome.penalty_weights[k][j];
            f[r] = lambda_j
                * if row < q_k {
                    task.signs[row]
                } else {
                    task.subgradient[row - q_k]
                };
            f[r] -= beta_perp[k * p + row];
            omega_stack[r] = outcome.omegas[k][j];
            omega_inv_diag[r] = 1.0 / omega_var;
        }

        if q_k > 0 {
            let gram = x_e.transpose() * &x_e;
            let chol = gram.clone().cholesky().ok_or(Error::RankDeficient {
                task: k,
                columns: task.active.clone(),
                rank: 0,
            })?;
            let gram_inv = chol.inverse();
            let s2 = sigmas[k] * sigmas[k];
            sigma_beta
                .view_mut((offsets[k], offsets[k]), (q_k, q_k))
                .copy_from(&(&gram_inv * s2));
            sigma_beta_inv
                .view_mut((offsets[k], offsets[k]), (q_k, q_k))
                .copy_from(&(&gram / s2));
        }
    }

    // C2 = C0 S (A1 - A2 D) and the Gamma part of f is C0 S A2 Gamma: the
    // sign diagonal converts magnitudes back to signed coefficients before
    // the design blocks act on them.
    let c0s = {
        let mut m = c0.clone();
        for (col, mut c) in m.column_iter_mut().enumerate() {
            c *= signs[col];
        }
        m
    };
    let (a1, a2) = plan.a_split();
    let c2 = &c0s * (&a1 - &a2 * &plan.d);
    f += &c0s * (&a2 * &plan.gamma);

    if v_dim > 0 && !plan.strictly_feasible(&plan.v) {
        return Err(Error::InfeasibleStart);
    }

    finish_assembly(AffineSystem {
        c1,
        c0,
        c2,
        f,
        omega_inv_diag,
        sigma_beta,
        sigma_beta_inv,
        beta_e,
        beta_perp,
        h: plan.h.clone(),
        g: plan.g.clone(),
        v_observed: plan.v.clone(),
        omega_stack,
        sigmas: sigmas.to_vec(),
        labels: outcome.labels(),
    })
}

/// Full second stage for a multi-task outcome: assemble, solve the
/// restricted optimizer, evaluate the estimating equations. An all-empty
/// selection yields an empty result.
pub fn infer_mtl(
    dataset: &MultiTaskDataset,
    outcome: &SelectionOutcome,
    sigmas: &[f64],
) -> Result<InferenceResult> {
    if outcome.is_empty() {
        return Ok(InferenceResult::empty());
    }
    let plan = build_stacking_plan(outcome)?;
    let mats = assemble_inference_matrices(dataset, outcome, &plan, sigmas)?;
    let solve = solve_restricted_optimizer(&mats)?;
    selective_mle(&mats, &solve)
}
