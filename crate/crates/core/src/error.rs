//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("all tasks have an empty active set")]
    EmptySelection,

    #[error("non-positive magnitude among active coefficients (task {task}, entry {entry})")]
    InconsistentSigns { task: usize, entry: usize },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
        /// Last iterate, when the failing routine has one to report.
        last_iterate: Option<Vec<f64>>,
    },

    #[error("stationarity violated: KKT residual {residual:.3e} exceeds {limit:.3e}")]
    KktViolation { residual: f64, limit: f64 },

    #[error("design for task {task} is rank deficient on the selected columns {columns:?} (rank {rank})")]
    RankDeficient {
        task: usize,
        columns: Vec<usize>,
        rank: usize,
    },

    #[error("C2 is rank deficient; the stacking plan is degenerate")]
    SingularDelta,

    #[error("matrix {name} is not positive definite")]
    NotPositiveDefinite { name: &'static str },

    #[error("observed V is infeasible for the barrier (HV > g violated); selection output is inconsistent")]
    InfeasibleStart,

    #[error("task {task}: {n} samples cannot support inference on {q} selected features")]
    DegreesOfFreedomExhausted { task: usize, n: usize, q: usize },

    #[error("column {column} of task {task} is not centered (mean {mean:.3e})")]
    NotCentered {
        task: usize,
        column: usize,
        mean: f64,
    },

    #[error("shape mismatch: {message}")]
    ShapeMismatch { message: String },

    #[error("non-numeric cell at row {row}, column {column} in {path}")]
    NonNumericCell {
        path: String,
        row: usize,
        column: usize,
    },

    #[error("missing or unreadable file: {path}")]
    MissingFile { path: String },

    #[error("invalid configuration: {message}")]
    InvalidConfig { message: String },
}

impl Error {
    /// True for failures of numerical routines (as opposed to bad inputs).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::KktViolation { .. }
                | Error::SingularDelta
                | Error::NotPositiveDefinite { .. }
                | Error::InfeasibleStart
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
