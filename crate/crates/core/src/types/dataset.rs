//! Multi-task datasets and the Gaussian randomization specification.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum absolute column mean accepted as "centered".
pub const CENTERING_TOL: f64 = 1e-8;

/// Design matrix, response and noise scale for one regression task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskData {
    /// n_k x p design matrix with centered columns.
    pub x: DMatrix<f64>,
    /// Response vector of length n_k.
    pub y: DVector<f64>,
    /// Noise standard deviation, if known. `None` means "to be estimated".
    pub sigma: Option<f64>,
}

impl TaskData {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }
}

/// A collection of K regression tasks sharing the same p predictors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiTaskDataset {
    tasks: Vec<TaskData>,
    p: usize,
}

impl MultiTaskDataset {
    /// Builds a dataset, rejecting inputs that violate the invariants:
    /// shared feature count, at least one sample per task and centered
    /// design columns.
    pub fn new(tasks: Vec<TaskData>) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::ShapeMismatch {
                message: "a dataset needs at least one task".into(),
            });
        }
        let p = tasks[0].x.ncols();
        for (k, task) in tasks.iter().enumerate() {
            if task.x.ncols() != p {
                return Err(Error::ShapeMismatch {
                    message: format!("task {k} has {} predictors, task 0 has {p}", task.x.ncols()),
                });
            }
            if task.x.nrows() == 0 {
                return Err(Error::ShapeMismatch {
                    message: format!("task {k} has no samples"),
                });
            }
            if task.y.len() != task.x.nrows() {
                return Err(Error::ShapeMismatch {
                    message: format!(
                        "task {k}: X has {} rows but y has {} entries",
                        task.x.nrows(),
                        task.y.len()
                    ),
                });
            }
            if let Some(s) = task.sigma {
                if !(s > 0.0) {
                    return Err(Error::InvalidConfig {
                        message: format!("task {k}: noise scale must be positive, got {s}"),
                    });
                }
            }
            let n = task.x.nrows() as f64;
            for j in 0..p {
                let mean = task.x.column(j).sum() / n;
                if mean.abs() > CENTERING_TOL {
                    return Err(Error::NotCentered {
                        task: k,
                        column: j,
                        mean,
                    });
                }
            }
        }
        Ok(Self { tasks, p })
    }

    /// Centers every design column in place, then validates.
    pub fn new_centering(mut tasks: Vec<TaskData>) -> Result<Self> {
        for task in &mut tasks {
            center_columns(&mut task.x);
        }
        Self::new(tasks)
    }

    pub fn k(&self) -> usize {
        self.tasks.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn tasks(&self) -> &[TaskData] {
        &self.tasks
    }

    pub fn task(&self, k: usize) -> &TaskData {
        &self.tasks[k]
    }

    /// Per-task noise scales, substituting `fallback(k)` where unknown.
    pub fn sigmas_or(&self, fallback: impl Fn(usize) -> f64) -> Vec<f64> {
        self.tasks
            .iter()
            .enumerate()
            .map(|(k, t)| t.sigma.unwrap_or_else(|| fallback(k)))
            .collect()
    }

    /// Restricts every task to the given row subsets (one per task).
    pub fn subset_rows(&self, rows: &[Vec<usize>]) -> Result<Self> {
        if rows.len() != self.k() {
            return Err(Error::DimensionMismatch {
                what: "row subsets",
                expected: self.k(),
                got: rows.len(),
            });
        }
        let tasks = self
            .tasks
            .iter()
            .zip(rows)
            .map(|(t, idx)| TaskData {
                x: t.x.select_rows(idx.iter()),
                y: t.y.select_rows(idx.iter()),
                sigma: t.sigma,
            })
            .collect();
        // Row subsets of centered columns are only approximately centered;
        // the selection loss does not require exact centering, so re-center.
        Self::new_centering(tasks)
    }
}

/// Subtracts each column's mean.
pub fn center_columns(x: &mut DMatrix<f64>) {
    let n = x.nrows() as f64;
    for mut col in x.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
}

/// Specification of the Gaussian randomization added to each task's
/// selection objective: omega^(k) ~ N(0, v^2 sigma_k^2 d_k^2 I_p), where
/// d_k^2 is the mean squared design column norm. The design factor puts the
/// randomizer on the scale of the score X'y, which is what makes a scale of
/// v = sqrt((1-s)/s) use about as much information for selection as
/// splitting off a fraction s of the samples; for a design with unit-norm
/// columns it reduces to v^2 sigma_k^2 I.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RandomizationSpec {
    /// Randomizer scale v >= 0. Zero disables randomization.
    pub scale: f64,
    /// Master seed; draw k is deterministic given (seed, k).
    pub seed: u64,
}

impl RandomizationSpec {
    pub fn new(scale: f64, seed: u64) -> Result<Self> {
        if !(scale >= 0.0) {
            return Err(Error::InvalidConfig {
                message: format!("randomizer scale must be nonnegative, got {scale}"),
            });
        }
        Ok(Self { scale, seed })
    }

    /// Standard deviation of each omega component for a task with noise
    /// scale `sigma` and design `x`.
    pub fn component_std(&self, sigma: f64, x: &DMatrix<f64>) -> f64 {
        self.scale * sigma * design_scale(x)
    }
}

/// Root mean squared column norm of a design, the natural per-coordinate
/// scale of the score X'y.
pub fn design_scale(x: &DMatrix<f64>) -> f64 {
    let p = x.ncols();
    (x.column_iter().map(|c| c.norm_squared()).sum::<f64>() / p as f64).sqrt()
}
