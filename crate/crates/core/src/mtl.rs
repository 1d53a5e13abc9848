//! Shared-sparsity selection across tasks.
//!
//! The grouped objective
//!   sum_k L(theta^(k)) + 2 lambda sum_j sqrt(sum_k |theta_j^(k)|)
//! is minimized by iterating a local linear approximation of the square-root
//! penalty: each outer round recomputes per-feature weights
//!   w_j = min(lambda0, lambda / sqrt(sum_k |theta_j^(k)|))
//! from the previous iterate and solves one weighted randomized LASSO per
//! task. The linearized penalty majorizes the concave square root, so the
//! grouped objective is non-increasing across outer rounds.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lasso::{kkt_decompose, sample_randomization, solve_weighted_lasso, LassoConfig};
use crate::types::{MultiTaskDataset, RandomizationSpec, SelectionOutcome, TaskSelection};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MtlConfig {
    /// Tuning parameter of the grouped penalty.
    pub lambda: f64,
    /// Cap on the per-feature weights; bounds the weight of features whose
    /// coefficient sum is (near) zero.
    pub lambda0: f64,
    /// Outer convergence: largest absolute coefficient change across all
    /// (feature, task) pairs.
    pub outer_tol: f64,
    pub max_outer: usize,
    pub lasso: LassoConfig,
}

impl MtlConfig {
    /// Defaults around a given lambda: lambda0 = 50 lambda so the cap binds
    /// only for near-zero coefficient sums.
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            lambda0: 50.0 * lambda,
            outer_tol: 1e-6,
            max_outer: 100,
            lasso: LassoConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !(self.lambda0 > 0.0) {
            return Err(Error::InvalidConfig {
                message: "lambda and lambda0 must be positive".into(),
            });
        }
        self.lasso.validate()
    }
}

/// Per-feature weights from the previous iterate:
/// w_j = min(lambda0, lambda * (sum_k |theta_j^(k)|)^(-1/2)), with the cap
/// taking over when the sum vanishes.
pub fn update_penalty_weights(
    coefficients: &DMatrix<f64>,
    lambda: f64,
    lambda0: f64,
) -> DVector<f64> {
    DVector::from_iterator(
        coefficients.nrows(),
        coefficients.row_iter().map(|row| {
            let total: f64 = row.iter().map(|t| t.abs()).sum();
            if total > 0.0 {
                lambda0.min(lambda / total.sqrt())
            } else {
                lambda0
            }
        }),
    )
}

/// Grouped objective of the reformulated problem, used for descent checks.
pub fn reformulated_objective(
    coefficients: &DMatrix<f64>,
    dataset: &MultiTaskDataset,
    omegas: &[DVector<f64>],
    lambda: f64,
    ridges: &[f64],
) -> f64 {
    let mut value = 0.0;
    for (k, task) in dataset.tasks().iter().enumerate() {
        let theta = coefficients.column(k).into_owned();
        let r = &task.y - &task.x * &theta;
        value +=
            0.5 * r.norm_squared() - omegas[k].dot(&theta) + 0.5 * ridges[k] * theta.norm_squared();
    }
    let penalty: f64 = coefficients
        .row_iter()
        .map(|row| row.iter().map(|t| t.abs()).sum::<f64>().sqrt())
        .sum();
    value + 2.0 * lambda * penalty
}

/// Smallest uniform weight at which every task's initial solve is all-zero.
pub fn uniform_lambda_max(dataset: &MultiTaskDataset, omegas: &[DVector<f64>]) -> f64 {
    dataset
        .tasks()
        .iter()
        .zip(omegas)
        .map(|(t, w)| (t.x.transpose() * &t.y + w).amax())
        .fold(0.0, f64::max)
}

/// One outer round: recompute weights from `coefficients`, then solve each
/// task's weighted LASSO warm-started at the previous iterate.
/// Returns the new coefficients and the weights used.
pub fn mtl_outer_step(
    coefficients: &DMatrix<f64>,
    dataset: &MultiTaskDataset,
    omegas: &[DVector<f64>],
    config: &MtlConfig,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let weights = update_penalty_weights(coefficients, config.lambda, config.lambda0);
    let mut next = coefficients.clone();
    for (k, task) in dataset.tasks().iter().enumerate() {
        let warm = coefficients.column(k).into_owned();
        let sol = solve_weighted_lasso(
            &task.x,
            &task.y,
            &omegas[k],
            &weights,
            &config.lasso,
            Some(&warm),
        )?;
        next.set_column(k, &sol.theta);
    }
    Ok((next, weights))
}

/// Per-round diagnostics of a selection run.
#[derive(Debug, Clone)]
pub struct MtlTrace {
    /// Grouped objective after the initialization and after each outer round.
    pub objective: Vec<f64>,
    /// Largest coefficient change per outer round.
    pub max_change: Vec<f64>,
    pub outer_iterations: usize,
}

/// Runs the full selection, returning the outcome and its trace.
pub fn run_mtl_selection_traced(
    dataset: &MultiTaskDataset,
    spec: &RandomizationSpec,
    config: &MtlConfig,
) -> Result<(SelectionOutcome, MtlTrace)> {
    config.validate()?;
    let p = dataset.p();
    let kk = dataset.k();
    let sigmas = dataset.sigmas_or(|k| {
        // Pre-estimate for the randomizer scale when sigma is unknown:
        // marginal standard deviation of the response.
        let y = &dataset.task(k).y;
        let n = y.len() as f64;
        let mean = y.sum() / n;
        (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt()
    });

    let omega_stds: Vec<f64> = dataset
        .tasks()
        .iter()
        .zip(&sigmas)
        .map(|(t, s)| spec.component_std(*s, &t.x))
        .collect();
    let omegas: Vec<DVector<f64>> = (0..kk)
        .map(|k| sample_randomization(p, spec, omega_stds[k], k))
        .collect();
    let ridges: Vec<f64> = dataset
        .tasks()
        .iter()
        .map(|t| config.lasso.ridge.resolve(&t.x))
        .collect();

    // Initialization: plain randomized LASSO per task at uniform weight.
    let uniform = DVector::from_element(p, config.lambda);
    let mut coefficients = DMatrix::zeros(p, kk);
    for (k, task) in dataset.tasks().iter().enumerate() {
        let sol =
            solve_weighted_lasso(&task.x, &task.y, &omegas[k], &uniform, &config.lasso, None)?;
        coefficients.set_column(k, &sol.theta);
    }
    let mut weights_used = uniform;

    let mut trace = MtlTrace {
        objective: vec![reformulated_objective(
            &coefficients,
            dataset,
            &omegas,
            config.lambda,
            &ridges,
        )],
        max_change: Vec::new(),
        outer_iterations: 0,
    };

    let mut converged = false;
    for _ in 0..config.max_outer {
        let (next, weights) = mtl_outer_step(&coefficients, dataset, &omegas, config)?;
        let max_change = (&next - &coefficients).amax();
        coefficients = next;
        weights_used = weights;
        trace.outer_iterations += 1;
        trace.max_change.push(max_change);
        trace.objective.push(reformulated_objective(
            &coefficients,
            dataset,
            &omegas,
            config.lambda,
            &ridges,
        ));
        if max_change < config.outer_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            what: "shared-sparsity outer loop",
            iterations: trace.outer_iterations,
            residual: *trace.max_change.last().unwrap_or(&f64::NAN),
            last_iterate: Some(coefficients.as_slice().to_vec()),
        });
    }

    let mut tasks = Vec::with_capacity(kk);
    for (k, task) in dataset.tasks().iter().enumerate() {
        let theta = coefficients.column(k).into_owned();
        let d = kkt_decompose(
            &task.x,
            &task.y,
            &omegas[k],
            &weights_used,
            ridges[k],
            &theta,
            config.lasso.tol,
        )?;
        tasks.push(TaskSelection {
            active: d.active,
            signs: d.signs,
            magnitudes: d.magnitudes,
            subgradient: d.subgradient,
        });
    }

    let outcome = SelectionOutcome {
        tasks,
        penalty_weights: vec![weights_used; kk],
        omegas,
        omega_stds,
        ridges,
        coefficients,
    };
    outcome.validate()?;
    Ok((outcome, trace))
}

/// Runs the full selection. An empty selection is a valid outcome.
pub fn run_mtl_selection(
    dataset: &MultiTaskDataset,
    spec: &RandomizationSpec,
    config: &MtlConfig,
) -> Result<SelectionOutcome> {
    run_mtl_selection_traced(dataset, spec, config).map(|(outcome, _)| outcome)
}
