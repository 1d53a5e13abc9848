//! Datasets, selection outcomes and the cross-task stacking bookkeeping
//! shared by every other module.

mod dataset;
mod outcome;
mod stacking;

pub use dataset::{center_columns, MultiTaskDataset, RandomizationSpec, TaskData, CENTERING_TOL};
pub use outcome::{SelectionOutcome, TaskSelection};
pub use stacking::{
    b_to_vgamma, build_stacking_plan, stacked_magnitudes, vgamma_to_b, StackingPlan, UnionEntry,
};

use nalgebra::{DMatrix, DVector};

/// Builds a structurally valid outcome from per-task active sets and signed
/// active coefficients, with zero randomization draws, unit penalty weights
/// and zero inactive subgradients. Intended for tests and diagnostics of the
/// stacking and inference algebra; real outcomes come from the selector.
#[doc(hidden)]
pub fn outcome_for_test(p: usize, tasks: &[(&[usize], &[f64])]) -> SelectionOutcome {
    let k = tasks.len();
    let mut coefficients = DMatrix::zeros(p, k);
    let mut selections = Vec::with_capacity(k);
    for (t, (active, coefs)) in tasks.iter().enumerate() {
        assert_eq!(active.len(), coefs.len());
        for (&j, &c) in active.iter().zip(coefs.iter()) {
            coefficients[(j, t)] = c;
        }
        selections.push(TaskSelection {
            active: active.to_vec(),
            signs: DVector::from_iterator(coefs.len(), coefs.iter().map(|c| c.signum())),
            magnitudes: DVector::from_iterator(coefs.len(), coefs.iter().map(|c| c.abs())),
            subgradient: DVector::zeros(p - active.len()),
        });
    }
    SelectionOutcome {
        tasks: selections,
        penalty_weights: vec![DVector::from_element(p, 1.0); k],
        omegas: vec![DVector::zeros(p); k],
        omega_stds: vec![1.0; k],
        ridges: vec![0.0; k],
        coefficients,
    }
}
