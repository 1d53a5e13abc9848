//! Cross-task stacking of active coefficients.
//!
//! For every predictor that is active in one or more tasks, the stacked
//! magnitude vector B (task-major) is re-expressed through the pair (V, Gamma):
//! Gamma holds the per-predictor sum of absolute coefficients across tasks and
//! V holds all magnitudes except the one for the last task in which each
//! predictor is active. The bijection is B = A (V; Gamma - D V) for a
//! permutation matrix A and a 0/1 selector D, and the selection region
//! {b > 0 for every task} becomes {V > 0, Gamma - D V > 0}, written H v >= g
//! with H = [I; -D] and g = (0; -Gamma).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::SelectionOutcome;

/// Bookkeeping for one predictor in the active union.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnionEntry {
    /// Feature index.
    pub feature: usize,
    /// Tasks in which the feature is active, ascending. The last entry is
    /// the task whose magnitude is omitted from V.
    pub kappa: Vec<usize>,
    /// Positions in the stacked B vector of this feature's magnitudes,
    /// ordered like `kappa`.
    pub b_positions: Vec<usize>,
    /// Start of this feature's block inside V (the block has length
    /// `kappa.len() - 1`).
    pub v_offset: usize,
}

impl UnionEntry {
    pub fn multiplicity(&self) -> usize {
        self.kappa.len()
    }
}

/// The stacked bookkeeping derived from a selection outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackingPlan {
    /// Active union j_1 < ... < j_r with per-feature task lists.
    pub union: Vec<UnionEntry>,
    /// Observed Gamma, length r.
    pub gamma: DVector<f64>,
    /// Observed V, length q - r.
    pub v: DVector<f64>,
    /// Selector matrix D, r x (q - r); row i sums to d_{j_i} - 1.
    pub d: DMatrix<f64>,
    /// Permutation matrix A, q x q, with B = A (V; Gamma - D V).
    pub a: DMatrix<f64>,
    /// Constraint matrix H = [I_{q-r}; -D], q x (q - r).
    pub h: DMatrix<f64>,
    /// Constraint offset g = (0_{q-r}; -Gamma), length q.
    pub g: DVector<f64>,
    /// src[i] is the index into (V; Gamma - D V) that lands at B position i.
    src: Vec<usize>,
}

impl StackingPlan {
    pub fn q(&self) -> usize {
        self.src.len()
    }

    pub fn r(&self) -> usize {
        self.union.len()
    }

    /// Dimension of the free variable V.
    pub fn v_dim(&self) -> usize {
        self.q() - self.r()
    }

    /// Observed stacked magnitudes, reconstructed from (V, Gamma).
    pub fn observed_b(&self) -> DVector<f64> {
        vgamma_to_b(&self.v, &self.gamma, self).expect("plan is self-consistent")
    }

    /// Columns of A paired with V (A_1) and with Gamma - D V (A_2).
    pub fn a_split(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let q = self.q();
        let m = self.v_dim();
        (
            self.a.columns(0, m).into_owned(),
            self.a.columns(m, q - m).into_owned(),
        )
    }

    /// True when H v > g strictly.
    pub fn strictly_feasible(&self, v: &DVector<f64>) -> bool {
        let hv = &self.h * v;
        hv.iter().zip(self.g.iter()).all(|(a, b)| a > b)
    }
}

/// Builds the stacking plan for a selection outcome.
pub fn build_stacking_plan(outcome: &SelectionOutcome) -> Result<StackingPlan> {
    outcome.validate()?;
    if outcome.is_empty() {
        return Err(Error::EmptySelection);
    }
    let p = outcome.p();
    let q: usize = outcome.total_active();

    // Task-major position of each (task, feature) pair.
    let mut b_pos = vec![vec![usize::MAX; p]; outcome.k()];
    let mut offset = 0usize;
    for (k, task) in outcome.tasks.iter().enumerate() {
        for (i, &j) in task.active.iter().enumerate() {
            b_pos[k][j] = offset + i;
        }
        offset += task.q();
    }

    // Active union, ascending feature index; kappa ascending task index.
    let mut union: Vec<UnionEntry> = Vec::new();
    let mut v_offset = 0usize;
    #[allow(clippy::needless_range_loop)] // j indexes per-task position tables
    for j in 0..p {
        let kappa: Vec<usize> = (0..outcome.k())
            .filter(|&k| b_pos[k][j] != usize::MAX)
            .collect();
        if kappa.is_empty() {
            continue;
        }
        let b_positions = kappa.iter().map(|&k| b_pos[k][j]).collect();
        let d_j = kappa.len();
        union.push(UnionEntry {
            feature: j,
            kappa,
            b_positions,
            v_offset,
        });
        v_offset += d_j - 1;
    }
    let r = union.len();
    let v_dim = q - r;
    debug_assert_eq!(v_offset, v_dim);

    let b = stacked_magnitudes(outcome);

    // V keeps all but the last task's magnitude; Gamma accumulates the full
    // sum left to right so that Gamma - (D V) reproduces the omitted
    // magnitude with the exact same partial sum.
    let mut v = DVector::zeros(v_dim);
    let mut gamma = DVector::zeros(r);
    let mut d = DMatrix::zeros(r, v_dim);
    let mut src = vec![usize::MAX; q];
    for (i, entry) in union.iter().enumerate() {
        let d_j = entry.multiplicity();
        let mut partial = 0.0;
        for (t, &pos) in entry.b_positions.iter().enumerate() {
            if t + 1 < d_j {
                let col = entry.v_offset + t;
                v[col] = b[pos];
                d[(i, col)] = 1.0;
                partial += b[pos];
                src[pos] = col;
            } else {
                gamma[i] = partial + b[pos];
                src[pos] = v_dim + i;
            }
        }
    }

    let mut a = DMatrix::zeros(q, q);
    for (row, &col) in src.iter().enumerate() {
        a[(row, col)] = 1.0;
    }

    let mut h = DMatrix::zeros(q, v_dim);
    let mut g = DVector::zeros(q);
    for i in 0..v_dim {
        h[(i, i)] = 1.0;
    }
    for i in 0..r {
        for c in 0..v_dim {
            h[(v_dim + i, c)] = -d[(i, c)];
        }
        g[v_dim + i] = -gamma[i];
    }

    Ok(StackingPlan {
        union,
        gamma,
        v,
        d,
        a,
        h,
        g,
        src,
    })
}

/// Stacked magnitudes in task-major order.
pub fn stacked_magnitudes(outcome: &SelectionOutcome) -> DVector<f64> {
    let q = outcome.total_active();
    let mut b = DVector::zeros(q);
    let mut offset = 0;
    for task in &outcome.tasks {
        b.rows_mut(offset, task.q()).copy_from(&task.magnitudes);
        offset += task.q();
    }
    b
}

/// Splits a stacked magnitude vector into (V, Gamma) under a plan.
pub fn b_to_vgamma(b: &DVector<f64>, plan: &StackingPlan) -> Result<(DVector<f64>, DVector<f64>)> {
    if b.len() != plan.q() {
        return Err(Error::DimensionMismatch {
            what: "stacked magnitudes",
            expected: plan.q(),
            got: b.len(),
        });
    }
    let mut v = DVector::zeros(plan.v_dim());
    let mut gamma = DVector::zeros(plan.r());
    for (i, entry) in plan.union.iter().enumerate() {
        let d_j = entry.multiplicity();
        let mut partial = 0.0;
        for (t, &pos) in entry.b_positions.iter().enumerate() {
            if t + 1 < d_j {
                v[entry.v_offset + t] = b[pos];
                partial += b[pos];
            } else {
                gamma[i] = partial + b[pos];
            }
        }
    }
    Ok((v, gamma))
}

/// Reassembles stacked magnitudes: B = A (V; Gamma - D V). Linear in
/// (V, Gamma); trial points need not be positive.
pub fn vgamma_to_b(
    v: &DVector<f64>,
    gamma: &DVector<f64>,
    plan: &StackingPlan,
) -> Result<DVector<f64>> {
    if v.len() != plan.v_dim() {
        return Err(Error::DimensionMismatch {
            what: "V",
            expected: plan.v_dim(),
            got: v.len(),
        });
    }
    if gamma.len() != plan.r() {
        return Err(Error::DimensionMismatch {
            what: "Gamma",
            expected: plan.r(),
            got: gamma.len(),
        });
    }
    let v_dim = plan.v_dim();
    let mut w = DVector::zeros(plan.q());
    w.rows_mut(0, v_dim).copy_from(v);
    // Row sums of D V, accumulated left to right to mirror b_to_vgamma.
    for (i, entry) in plan.union.iter().enumerate() {
        let mut partial = 0.0;
        for t in 0..entry.multiplicity() - 1 {
            partial += v[entry.v_offset + t];
        }
        w[v_dim + i] = gamma[i] - partial;
    }
    let mut b = DVector::zeros(plan.q());
    for (row, &col) in plan.src.iter().enumerate() {
        b[row] = w[col];
    }
    Ok(b)
}
