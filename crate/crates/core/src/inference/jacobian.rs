//! Change-of-variables Jacobian of the stationarity map, as a diagnostic on
//! tiny instances.
//!
//! With the selected sets and signs fixed, the stationarity conditions send
//! the magnitudes and inactive subgradients (B, U) to the stacked
//! randomization vector, with the penalty weights themselves functions of B
//! through the per-predictor sums Gamma. The Jacobian determinant factors
//! as det(Q) det(R + T): Q is the diagonal of inactive weights, T the block
//! diagonal of ridged Grams, and R the coupling created by differentiating
//! the weights, which vanishes wherever the weight cap binds.

use nalgebra::{DMatrix, DVector};

use crate::types::{MultiTaskDataset, SelectionOutcome};

/// Weight for feature j given the per-predictor magnitude sum. Features with
/// a zero sum (inactive everywhere) sit at the cap.
fn weight(lambda: f64, lambda0: f64, gamma_j: f64) -> f64 {
    if gamma_j > 0.0 {
        lambda0.min(lambda / gamma_j.sqrt())
    } else {
        lambda0
    }
}

/// Per-feature magnitude sums Gamma_j implied by stacked magnitudes `b`
/// (task-major, each task's active set in order).
fn gamma_from_b(outcome: &SelectionOutcome, b: &DVector<f64>) -> Vec<f64> {
    let mut gamma = vec![0.0; outcome.p()];
    let mut at = 0;
    for task in &outcome.tasks {
        for (i, &j) in task.active.iter().enumerate() {
            gamma[j] += b[at + i].abs();
        }
        at += task.q();
    }
    gamma
}

/// Evaluates the stationarity map at stacked (B, U): returns the stacked
/// randomization vector, task-major, each task's rows ordered active first
/// then inactive ascending. The weights are recomputed from B, so this is
/// the non-affine map whose Jacobian the diagnostic checks.
pub fn stationarity_map(
    dataset: &MultiTaskDataset,
    outcome: &SelectionOutcome,
    b: &DVector<f64>,
    u: &DVector<f64>,
    lambda: f64,
    lambda0: f64,
) -> DVector<f64> {
    let p = dataset.p();
    let gamma = gamma_from_b(outcome, b);
    let mut omega = DVector::zeros(dataset.k() * p);
    let mut b_at = 0;
    let mut u_at = 0;
    for (k, task) in outcome.tasks.iter().enumerate() {
        let x = &dataset.task(k).x;
        let y = &dataset.task(k).y;
        let q_k = task.q();
        let mut theta = DVector::zeros(p);
        for (i, &j) in task.active.iter().enumerate() {
            theta[j] = task.signs[i] * b[b_at + i];
        }
        let resid_grad = x.transpose() * (y - x * &theta);
        let mut row = 0;
        for (i, &j) in task.active.iter().enumerate() {
            let w = weight(lambda, lambda0, gamma[j]);
            omega[k * p + row] = -resid_grad[j] + outcome.ridges[k] * theta[j] + w * task.signs[i];
            row += 1;
        }
        for (i, &j) in task.inactive(p).iter().enumerate() {
            let w = weight(lambda, lambda0, gamma[j]);
            omega[k * p + row] = -resid_grad[j] + w * u[u_at + i];
            row += 1;
        }
        b_at += q_k;
        u_at += p - q_k;
    }
    omega
}

/// det(Q) det(R + T) for the observed outcome.
///
/// Returned with the sign convention of the signed-coefficient
/// parameterization; its absolute value equals the absolute Jacobian
/// determinant of `stationarity_map` in (B, U).
pub fn jacobian_determinant(
    outcome: &SelectionOutcome,
    dataset: &MultiTaskDataset,
    lambda: f64,
    lambda0: f64,
) -> f64 {
    let p = dataset.p();
    let q = outcome.total_active();
    let b = crate::types::stacked_magnitudes(outcome);
    let gamma = gamma_from_b(outcome, &b);

    // det(Q): product of the weights on every task's inactive features.
    let mut det_q = 1.0;
    for task in &outcome.tasks {
        for &j in &task.inactive(p) {
            det_q *= weight(lambda, lambda0, gamma[j]);
        }
    }

    // T: block diagonal of X_E' X_E + eps I.
    let mut m = DMatrix::zeros(q, q);
    let mut offsets = Vec::with_capacity(outcome.k());
    let mut at = 0;
    for (k, task) in outcome.tasks.iter().enumerate() {
        offsets.push(at);
        let q_k = task.q();
        if q_k > 0 {
            let x_e = dataset.task(k).x.select_columns(task.active.iter());
            let mut gram = x_e.transpose() * &x_e;
            for i in 0..q_k {
                gram[(i, i)] += outcome.ridges[k];
            }
            m.view_mut((at, at), (q_k, q_k)).copy_from(&gram);
        }
        at += q_k;
    }

    // R: cross-task coupling -(lambda/2) s_j^(k) Gamma_j^{-3/2} s_j^(k') for
    // predictors shared by tasks k and k', zero wherever the cap binds.
    for (k, task) in outcome.tasks.iter().enumerate() {
        for (i, &j) in task.active.iter().enumerate() {
            let uncapped = lambda / gamma[j].sqrt() < lambda0;
            if !uncapped {
                continue;
            }
            let coef = -0.5 * lambda * gamma[j].powf(-1.5);
            for (k2, task2) in outcome.tasks.iter().enumerate() {
                if let Ok(i2) = task2.active.binary_search(&j) {
                    m[(offsets[k] + i, offsets[k2] + i2)] += coef * task.signs[i] * task2.signs[i2];
                }
            }
        }
    }

    det_q * m.determinant()
}
