//! Validation-MSE tuning along a lambda path.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mtl::run_mtl_selection;
use crate::sim::{Method, SolverSettings};
use crate::types::{MultiTaskDataset, RandomizationSpec};

/// Tuning path for one method.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TuningRecord {
    pub method: String,
    pub grid: Vec<f64>,
    /// Validation MSE per grid value, averaged across tuning datasets.
    pub mse: Vec<f64>,
    pub selected: f64,
}

/// Coefficients the method would carry to prediction at tuning parameter
/// `lambda`: least-squares refit on the selected support. Data splitting
/// selects on its selection half and refits on the held-out half; other
/// methods refit on the full training data.
pub fn fitted_coefficients(
    method: &Method,
    train: &MultiTaskDataset,
    lambda: f64,
    solver: &SolverSettings,
    rand_seed: u64,
) -> Result<DMatrix<f64>> {
    let p = train.p();
    let k = train.k();
    let sigmas = train.sigmas_or(|_| 1.0);
    let (refit_data, active_sets): (MultiTaskDataset, Vec<Vec<usize>>) = match method {
        Method::MtlSi { scale } => {
            let spec = RandomizationSpec::new(*scale, rand_seed)?;
            let out = run_mtl_selection(train, &spec, &solver.mtl_config(lambda))?;
            (
                train.clone(),
                out.tasks.iter().map(|t| t.active.clone()).collect(),
            )
        }
        Method::Naive => {
            let spec = RandomizationSpec::new(0.0, 0)?;
            let out = run_mtl_selection(train, &spec, &solver.mtl_config(lambda))?;
            (
                train.clone(),
                out.tasks.iter().map(|t| t.active.clone()).collect(),
            )
        }
        Method::SingleTaskSi { scale } => {
            let spec = RandomizationSpec::new(*scale, rand_seed)?;
            let lasso = solver.lasso_config();
            let mut sets = Vec::with_capacity(k);
            for (t, task) in train.tasks().iter().enumerate() {
                let sel = crate::baselines::single_task_select(
                    &task.x, &task.y, sigmas[t], &spec, t, lambda, &lasso,
                )?;
                sets.push(sel.active);
            }
            (train.clone(), sets)
        }
        Method::DataSplit { fraction } => {
            let plan = crate::baselines::SplitPlan::draw(train, *fraction, rand_seed)?;
            let sel_data = train.subset_rows(&plan.selection)?;
            let inf_data = train.subset_rows(&plan.inference)?;
            let spec = RandomizationSpec::new(0.0, 0)?;
            let out = run_mtl_selection(&sel_data, &spec, &solver.mtl_config(lambda))?;
            (
                inf_data,
                out.tasks.iter().map(|t| t.active.clone()).collect(),
            )
        }
    };

    let mut beta = DMatrix::zeros(p, k);
    for (t, active) in active_sets.iter().enumerate() {
        if active.is_empty() {
            continue;
        }
        let ls = crate::inference::task_least_squares(
            &refit_data.task(t).x,
            &refit_data.task(t).y,
            active,
            t,
        )?;
        for (i, &j) in active.iter().enumerate() {
            beta[(j, t)] = ls.beta_e[i];
        }
    }
    Ok(beta)
}

/// Mean squared prediction error on a validation set, averaged over tasks.
pub fn validation_mse(beta: &DMatrix<f64>, validation: &MultiTaskDataset) -> f64 {
    let k = validation.k();
    let mut total = 0.0;
    for t in 0..k {
        let task = validation.task(t);
        let resid = &task.y - &task.x * beta.column(t);
        total += resid.norm_squared() / task.n() as f64;
    }
    total / k as f64
}

/// Picks the grid value with the lowest average validation MSE across the
/// provided (train, validation, seed) triples, breaking ties toward the
/// larger lambda. Returns the winner and the averaged MSE path.
pub fn tune_lambda(
    method: &Method,
    folds: &[(MultiTaskDataset, MultiTaskDataset, u64)],
    grid: &[f64],
    solver: &SolverSettings,
) -> Result<(f64, Vec<f64>)> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig {
            message: "lambda grid is empty".into(),
        });
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) || grid[0] <= 0.0 {
        return Err(Error::InvalidConfig {
            message: "lambda grid must be positive and strictly ascending".into(),
        });
    }
    let mut path = vec![0.0; grid.len()];
    for (train, val, seed) in folds {
        for (i, &lambda) in grid.iter().enumerate() {
            // A grid value where selection fails to converge cannot be
            // chosen; it shows up as an infinite MSE in the path.
            path[i] += match fitted_coefficients(method, train, lambda, solver, *seed) {
                Ok(beta) => validation_mse(&beta, val),
                Err(e) if e.is_numerical() => f64::INFINITY,
                Err(e) => return Err(e),
            };
        }
    }
    for v in &mut path {
        *v /= folds.len() as f64;
    }
    let mut best = 0;
    for i in 1..grid.len() {
        if path[i] <= path[best] {
            best = i;
        }
    }
    if !path[best].is_finite() {
        return Err(Error::NonConvergence {
            what: "tuning (no grid value converged)",
            iterations: grid.len(),
            residual: f64::NAN,
            last_iterate: None,
        });
    }
    Ok((grid[best], path))
}
