//! Reporting utilities: cross-task similarity of significant features,
//! coefficient of variation, and back-projection of estimates through
//! loading matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::inference::{InferenceResult, IntervalRecord};

/// Jaccard similarity |A n B| / |A u B|; two empty sets count as 0.
pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let sa: std::collections::BTreeSet<usize> = a.iter().copied().collect();
    let sb: std::collections::BTreeSet<usize> = b.iter().copied().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 0.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

/// Per-task sets of significant features (interval excludes zero).
pub fn significant_sets(intervals: &[IntervalRecord], k: usize) -> Vec<Vec<usize>> {
    let mut sets = vec![Vec::new(); k];
    for rec in intervals {
        if rec.task < k && rec.excludes_zero() {
            sets[rec.task].push(rec.feature);
        }
    }
    for s in &mut sets {
        s.sort_unstable();
        s.dedup();
    }
    sets
}

/// Symmetric K x K Jaccard matrix of the significant-feature sets.
pub fn report_jaccard(sets: &[Vec<usize>]) -> DMatrix<f64> {
    let k = sets.len();
    DMatrix::from_fn(k, k, |a, b| jaccard(&sets[a], &sets[b]))
}

/// Coefficient of variation S.E. / |estimate| per coefficient; infinite
/// where the estimate is exactly zero.
pub fn report_cv(result: &InferenceResult) -> Vec<((usize, usize), f64)> {
    result
        .labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let se = result.inv_info[(i, i)].sqrt();
            let est = result.mle[i].abs();
            let cv = if est == 0.0 { f64::INFINITY } else { se / est };
            (label, cv)
        })
        .collect()
}

/// Plug-in back-projection beta = A_E theta_E of selected-coordinate
/// estimates through the loading columns of the selected features.
pub fn project_to_original(
    loadings: &DMatrix<f64>,
    estimates: &DVector<f64>,
) -> Result<DVector<f64>> {
    if loadings.ncols() != estimates.len() {
        return Err(Error::DimensionMismatch {
            what: "loading columns",
            expected: estimates.len(),
            got: loadings.ncols(),
        });
    }
    Ok(loadings * estimates)
}
