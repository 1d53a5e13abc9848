//! Joint sparse model selection for multi-task regression with valid
//! post-selection confidence intervals.
//!
//! The pipeline has two stages. Stage one selects a shared sparsity
//! structure by an iteratively reweighted, Gaussian-randomized LASSO
//! ([`mtl`]). Stage two conditions on a refinement of the selection event
//! and maximizes the resulting selection-adjusted likelihood approximately,
//! yielding point estimates, an observed information matrix and confidence
//! intervals for the selected coefficients ([`inference`]). Baseline
//! procedures (naive intervals, data splitting, per-task selection) live in
//! [`baselines`], and [`sim`] provides a seeded Monte Carlo harness that
//! measures coverage, interval length and selection accuracy.
//!
//! Validation guards use the `!(x > 0.0)` form on purpose: unlike
//! `x <= 0.0`, it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod inference;
pub mod lasso;
pub mod mtl;
pub mod report;
pub mod seed;
pub mod sim;
pub mod types;

pub use error::{Error, Result};
