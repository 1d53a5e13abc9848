//! Per-replication evaluation: coverage of the projected truth, interval
//! length, and selection accuracy after inference.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::IntervalRecord;
use crate::types::MultiTaskDataset;

/// Metrics for one (method, replication) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub method: String,
    pub replication: usize,
    /// Tuning parameter the run used.
    pub lambda: f64,
    /// Empirical coverage rate of the projected targets,
    /// 1 - misses / max(q, 1).
    pub coverage: f64,
    /// Mean interval length (0 when nothing selected).
    pub mean_length: f64,
    pub n_selected: usize,
    pub n_significant: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Signal-to-noise ratio per task.
    pub snr: Vec<f64>,
    /// Validation MSE at the used lambda, when the run tuned per
    /// replication.
    pub val_mse: Option<f64>,
}

impl MetricsRecord {
    pub fn check_ranges(&self) -> bool {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        unit(self.coverage) && unit(self.precision) && unit(self.recall) && unit(self.f1)
    }
}

/// Best linear coefficients of the selected model for one task under the
/// fixed design: argmin_b E || y - X_E b ||^2 = (X_E' X_E)^{-1} X_E' X beta.
/// When the selected set contains the true support this is exactly beta on
/// the selected coordinates; otherwise the omitted signal bleeds into them
/// through the realized column correlations.
pub fn projected_target(
    x: &DMatrix<f64>,
    beta_task: &DVector<f64>,
    active: &[usize],
) -> Result<DVector<f64>> {
    let q = active.len();
    if q == 0 {
        return Ok(DVector::zeros(0));
    }
    let x_e = x.select_columns(active.iter());
    let gram = x_e.transpose() * &x_e;
    let chol = gram.cholesky().ok_or(Error::NotPositiveDefinite {
        name: "X_E' X_E (projected target)",
    })?;
    Ok(chol.solve(&(x_e.transpose() * (x * beta_task))))
}

/// Computes coverage, lengths and the post-inference selection accuracy of
/// an interval table against the generating coefficients.
pub fn compute_metrics(
    intervals: &[IntervalRecord],
    beta_true: &DMatrix<f64>,
    active_sets: &[Vec<usize>],
    dataset: &MultiTaskDataset,
) -> Result<MetricsView> {
    let k = beta_true.ncols();
    if active_sets.len() != k {
        return Err(Error::DimensionMismatch {
            what: "active sets",
            expected: k,
            got: active_sets.len(),
        });
    }
    // Projected target per (task, feature).
    let mut targets = vec![Vec::new(); k];
    for task in 0..k {
        let beta_col = beta_true.column(task).into_owned();
        let proj = projected_target(&dataset.task(task).x, &beta_col, &active_sets[task])?;
        targets[task] = active_sets[task]
            .iter()
            .zip(proj.iter())
            .map(|(&j, &v)| (j, v))
            .collect();
    }

    let q: usize = active_sets.iter().map(Vec::len).sum();
    let mut misses = 0usize;
    let mut total_length = 0.0;
    let mut significant: Vec<(usize, usize)> = Vec::new();
    for rec in intervals {
        let target = targets[rec.task]
            .iter()
            .find(|(j, _)| *j == rec.feature)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::ShapeMismatch {
                message: format!(
                    "interval for (task {}, feature {}) has no matching selection",
                    rec.task, rec.feature
                ),
            })?;
        if !rec.covers(target) {
            misses += 1;
        }
        total_length += rec.length();
        if rec.excludes_zero() {
            significant.push((rec.task, rec.feature));
        }
    }

    let coverage = 1.0 - misses as f64 / q.max(1) as f64;
    let mean_length = if intervals.is_empty() {
        0.0
    } else {
        total_length / intervals.len() as f64
    };

    let truly_active: Vec<(usize, usize)> = (0..k)
        .flat_map(|task| {
            (0..beta_true.nrows())
                .filter(move |&j| beta_true[(j, task)] != 0.0)
                .map(move |j| (task, j))
        })
        .collect();
    let hits = significant
        .iter()
        .filter(|pair| truly_active.contains(pair))
        .count();
    let precision = if significant.is_empty() {
        0.0
    } else {
        hits as f64 / significant.len() as f64
    };
    let recall = if truly_active.is_empty() {
        0.0
    } else {
        hits as f64 / truly_active.len() as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };

    Ok(MetricsView {
        coverage,
        mean_length,
        n_selected: q,
        n_significant: significant.len(),
        precision,
        recall,
        f1,
    })
}

/// The data-dependent part of a [`MetricsRecord`].
#[derive(Debug, Clone)]
pub struct MetricsView {
    pub coverage: f64,
    pub mean_length: f64,
    pub n_selected: usize,
    pub n_significant: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}
