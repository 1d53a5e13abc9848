//! What the selection stage emits: active sets, signs, magnitudes,
//! subgradients, penalty weights and randomization draws.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-task selection record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSelection {
    /// Active feature indices E_k, ascending.
    pub active: Vec<usize>,
    /// Signs of the active coefficients, in `active` order.
    pub signs: DVector<f64>,
    /// Absolute values b^(k) of the active coefficients, in `active` order.
    pub magnitudes: DVector<f64>,
    /// Inactive subgradient u^(k), over the complement of E_k ascending.
    pub subgradient: DVector<f64>,
}

impl TaskSelection {
    pub fn q(&self) -> usize {
        self.active.len()
    }

    /// Complement of the active set in ascending order.
    pub fn inactive(&self, p: usize) -> Vec<usize> {
        let mut mask = vec![true; p];
        for &j in &self.active {
            mask[j] = false;
        }
        (0..p).filter(|&j| mask[j]).collect()
    }
}

/// Everything the selection algorithm records at convergence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub tasks: Vec<TaskSelection>,
    /// Final penalty weights, one length-p vector per task, exactly as used
    /// in the last inner solve.
    pub penalty_weights: Vec<DVector<f64>>,
    /// Randomization draws omega^(k).
    pub omegas: Vec<DVector<f64>>,
    /// Standard deviation of each omega component, per task.
    pub omega_stds: Vec<f64>,
    /// Ridge epsilon used by the solver, per task.
    pub ridges: Vec<f64>,
    /// Full coefficient matrix Theta-hat, p x K.
    pub coefficients: DMatrix<f64>,
}

impl SelectionOutcome {
    pub fn k(&self) -> usize {
        self.tasks.len()
    }

    pub fn p(&self) -> usize {
        self.coefficients.nrows()
    }

    /// Total number of selected (task, feature) pairs, q = q_1 + ... + q_K.
    pub fn total_active(&self) -> usize {
        self.tasks.iter().map(|t| t.q()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total_active() == 0
    }

    /// Stacked (task, feature) labels in task-major order, each task's
    /// active set ascending. This fixes the coordinate order of every
    /// stacked vector downstream.
    pub fn labels(&self) -> Vec<(usize, usize)> {
        self.tasks
            .iter()
            .enumerate()
            .flat_map(|(k, t)| t.active.iter().map(move |&j| (k, j)))
            .collect()
    }

    /// Checks the structural invariants relating the per-task records to the
    /// coefficient matrix.
    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        for (k, task) in self.tasks.iter().enumerate() {
            let q = task.q();
            if task.signs.len() != q || task.magnitudes.len() != q {
                return Err(Error::DimensionMismatch {
                    what: "signs/magnitudes",
                    expected: q,
                    got: task.signs.len().max(task.magnitudes.len()),
                });
            }
            if task.subgradient.len() != p - q {
                return Err(Error::DimensionMismatch {
                    what: "inactive subgradient",
                    expected: p - q,
                    got: task.subgradient.len(),
                });
            }
            if !task.active.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::ShapeMismatch {
                    message: format!("task {k}: active set is not strictly ascending"),
                });
            }
            for (i, &j) in task.active.iter().enumerate() {
                if !(task.magnitudes[i] > 0.0) {
                    return Err(Error::InconsistentSigns { task: k, entry: i });
                }
                let theta = self.coefficients[(j, k)];
                if theta.signum() != task.signs[i] || theta == 0.0 {
                    return Err(Error::InconsistentSigns { task: k, entry: i });
                }
            }
            for (i, &j) in task.inactive(p).iter().enumerate() {
                if self.coefficients[(j, k)] != 0.0 {
                    return Err(Error::ShapeMismatch {
                        message: format!("task {k}: feature {j} marked inactive but nonzero"),
                    });
                }
                if task.subgradient[i].abs() >= 1.0 {
                    return Err(Error::ShapeMismatch {
                        message: format!(
                            "task {k}: inactive subgradient {} at feature {j} is not < 1",
                            task.subgradient[i]
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}
