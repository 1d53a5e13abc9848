//! Comparison methods: unadjusted intervals, data splitting, and per-task
//! randomized selection with selective inference.

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{
    confidence_intervals, finish_assembly, selective_mle, solve_restricted_optimizer,
    task_least_squares, z_quantile, AffineSystem, InferenceResult, IntervalRecord,
};
use crate::lasso::{kkt_decompose, sample_randomization, solve_weighted_lasso, LassoConfig};
use crate::mtl::{run_mtl_selection, MtlConfig};
use crate::seed;
use crate::types::{MultiTaskDataset, RandomizationSpec};

/// Scale of the randomizer that uses roughly as much information for
/// selection as splitting off a fraction `s` of the samples.
pub fn randomizer_equivalent_scale(s: f64) -> f64 {
    ((1.0 - s) / s).sqrt()
}

/// Per-task sample partition for data splitting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitPlan {
    pub fraction: f64,
    pub selection: Vec<Vec<usize>>,
    pub inference: Vec<Vec<usize>>,
    pub seed: u64,
}

impl SplitPlan {
    /// Draws a uniform partition per task with |selection| = [s n_k]
    /// (round half up).
    pub fn draw(dataset: &MultiTaskDataset, fraction: f64, master_seed: u64) -> Result<Self> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::InvalidConfig {
                message: format!("split fraction must be in (0, 1), got {fraction}"),
            });
        }
        let mut selection = Vec::new();
        let mut inference = Vec::new();
        for (k, task) in dataset.tasks().iter().enumerate() {
            let n = task.n();
            let m = (fraction * n as f64).round() as usize;
            if m == 0 || m == n {
                return Err(Error::InvalidConfig {
                    message: format!("task {k}: split leaves an empty half (n={n}, s={fraction})"),
                });
            }
            let mut rng = StdRng::seed_from_u64(seed::derive2(master_seed, 0x5117, k as u64));
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let mut sel = idx[..m].to_vec();
            let mut inf = idx[m..].to_vec();
            sel.sort_unstable();
            inf.sort_unstable();
            selection.push(sel);
            inference.push(inf);
        }
        Ok(Self {
            fraction,
            selection,
            inference,
            seed: master_seed,
        })
    }
}

/// Classical z-intervals for a fixed selected model, no selection
/// adjustment: beta_j +- z sigma sqrt((X_E'X_E)^{-1}_jj).
pub fn classical_intervals(
    dataset: &MultiTaskDataset,
    active_sets: &[Vec<usize>],
    alpha: f64,
    sigmas: &[f64],
    method: &str,
) -> Result<Vec<IntervalRecord>> {
    let z = z_quantile(1.0 - alpha / 2.0);
    let mut records = Vec::new();
    for (k, active) in active_sets.iter().enumerate() {
        if active.is_empty() {
            continue;
        }
        let ls = task_least_squares(&dataset.task(k).x, &dataset.task(k).y, active, k)?;
        let gram_inv = ls
            .gram
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite { name: "X_E' X_E" })?
            .inverse();
        for (i, &feature) in active.iter().enumerate() {
            let stderr = sigmas[k] * gram_inv[(i, i)].sqrt();
            let estimate = ls.beta_e[i];
            records.push(IntervalRecord {
                task: k,
                feature,
                estimate,
                lower: estimate - z * stderr,
                upper: estimate + z * stderr,
                stderr,
                method: method.to_string(),
                alpha,
            });
        }
    }
    Ok(records)
}

/// Naive baseline: select on the full data without randomization, then
/// report unadjusted intervals on the same data.
pub fn naive_inference(
    dataset: &MultiTaskDataset,
    active_sets: &[Vec<usize>],
    alpha: f64,
    sigmas: &[f64],
) -> Result<Vec<IntervalRecord>> {
    classical_intervals(dataset, active_sets, alpha, sigmas, "Naive")
}

/// Data splitting DS(s): the usual (non-randomized) multi-task selection on
/// the selection half, classical intervals on the held-out half.
/// Returns the intervals, the selected sets, and the inference half the
/// intervals refer to.
pub fn split_then_infer(
    dataset: &MultiTaskDataset,
    fraction: f64,
    config: &MtlConfig,
    alpha: f64,
    sigmas: &[f64],
    split_seed: u64,
) -> Result<(Vec<IntervalRecord>, Vec<Vec<usize>>, MultiTaskDataset)> {
    let plan = SplitPlan::draw(dataset, fraction, split_seed)?;
    let sel_data = dataset.subset_rows(&plan.selection)?;
    let inf_data = dataset.subset_rows(&plan.inference)?;

    // Splitting supplies the randomness; the selection stage runs with
    // omega = 0.
    let no_rand = RandomizationSpec::new(0.0, 0)?;
    let outcome = run_mtl_selection(&sel_data, &no_rand, config)?;
    let active_sets: Vec<Vec<usize>> = outcome.tasks.iter().map(|t| t.active.clone()).collect();

    for (k, active) in active_sets.iter().enumerate() {
        let n_inf = inf_data.task(k).n();
        if !active.is_empty() && n_inf <= active.len() {
            return Err(Error::DegreesOfFreedomExhausted {
                task: k,
                n: n_inf,
                q: active.len(),
            });
        }
    }
    let label = format!("DS({fraction})");
    let records = classical_intervals(&inf_data, &active_sets, alpha, sigmas, &label)?;
    Ok((records, active_sets, inf_data))
}

/// Per-task randomized LASSO selection at a uniform weight.
#[derive(Debug, Clone)]
pub struct SingleTaskSelection {
    pub active: Vec<usize>,
    pub signs: DVector<f64>,
    pub magnitudes: DVector<f64>,
    pub subgradient: DVector<f64>,
    pub omega: DVector<f64>,
    pub omega_std: f64,
    pub ridge: f64,
    pub lambda: f64,
}

pub fn single_task_select(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    sigma: f64,
    spec: &RandomizationSpec,
    task: usize,
    lambda: f64,
    lasso: &LassoConfig,
) -> Result<SingleTaskSelection> {
    let p = x.ncols();
    let omega_std = spec.component_std(sigma, x);
    let omega = sample_randomization(p, spec, omega_std, task);
    let weights = DVector::from_element(p, lambda);
    let sol = solve_weighted_lasso(x, y, &omega, &weights, lasso, None)?;
    let d = kkt_decompose(x, y, &omega, &weights, sol.ridge, &sol.theta, lasso.tol)?;
    Ok(SingleTaskSelection {
        active: d.active,
        signs: d.signs,
        magnitudes: d.magnitudes,
        subgradient: d.subgradient,
        omega,
        omega_std,
        ridge: sol.ridge,
        lambda,
    })
}

/// Selective inference for one task's randomized LASSO: condition on the
/// active set, signs and inactive subgradient, and optimize over the
/// magnitudes on the positive orthant (H = I, g = 0).
pub fn single_task_infer(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    selection: &SingleTaskSelection,
    sigma: f64,
    task: usize,
) -> Result<InferenceResult> {
    let q = selection.active.len();
    if q == 0 {
        return Ok(InferenceResult::empty());
    }
    let p = x.ncols();
    let omega_var = selection.omega_std * selection.omega_std;
    if omega_var <= 0.0 {
        return Err(Error::InvalidConfig {
            message: "single-task selective inference requires a randomized selection".into(),
        });
    }
    let ls = task_least_squares(x, y, &selection.active, task)?;

    // Rows: active features first (selection order), then inactive ascending.
    let mut order = selection.active.clone();
    let mut is_active = vec![false; p];
    for &j in &selection.active {
        is_active[j] = true;
    }
    order.extend((0..p).filter(|&j| !is_active[j]));

    let x_e = x.select_columns(selection.active.iter());
    let cross = x.transpose() * &x_e; // p x q
    let mut c1 = DMatrix::zeros(p, q);
    let mut c0 = DMatrix::zeros(p, q);
    let mut f = DVector::zeros(p);
    let mut omega_stack = DVector::zeros(p);
    let mut beta_perp = DVector::zeros(p);
    for (row, &j) in order.iter().enumerate() {
        for col in 0..q {
            c1[(row, col)] = -cross[(j, col)];
            c0[(row, col)] = cross[(j, col)];
        }
        if row < q {
            c0[(row, row)] += selection.ridge;
        }
        f[row] = selection.lambda
            * if row < q {
                selection.signs[row]
            } else {
                selection.subgradient[row - q]
            };
        beta_perp[row] = ls.beta_perp[j];
        f[row] -= beta_perp[row];
        omega_stack[row] = selection.omega[j];
    }
    let c2 = {
        let mut m = c0.clone();
        for (col, mut c) in m.column_iter_mut().enumerate() {
            c *= selection.signs[col];
        }
        m
    };

    let s2 = sigma * sigma;
    let gram_inv = ls
        .gram
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { name: "X_E' X_E" })?
        .inverse();
    let labels = selection.active.iter().map(|&j| (task, j)).collect();
    let mats = finish_assembly(AffineSystem {
        c1,
        c0,
        c2,
        f,
        omega_inv_diag: DVector::from_element(p, 1.0 / omega_var),
        sigma_beta: &gram_inv * s2,
        sigma_beta_inv: &ls.gram / s2,
        beta_e: ls.beta_e.clone(),
        beta_perp,
        h: DMatrix::identity(q, q),
        g: DVector::zeros(q),
        v_observed: selection.magnitudes.clone(),
        omega_stack,
        sigmas: vec![sigma],
        labels,
    })?;
    let solve = solve_restricted_optimizer(&mats)?;
    selective_mle(&mats, &solve)
}

/// Runs per-task randomized selection plus selective inference on every
/// task of a dataset; the interval table concatenates tasks.
pub fn single_task_si(
    dataset: &MultiTaskDataset,
    spec: &RandomizationSpec,
    lambda: f64,
    lasso: &LassoConfig,
    alpha: f64,
    sigmas: &[f64],
) -> Result<(Vec<IntervalRecord>, Vec<Vec<usize>>)> {
    let label = format!("LASSO({})+SI", spec.scale);
    let mut records = Vec::new();
    let mut active_sets = Vec::new();
    for (k, task) in dataset.tasks().iter().enumerate() {
        let selection = single_task_select(&task.x, &task.y, sigmas[k], spec, k, lambda, lasso)?;
        active_sets.push(selection.active.clone());
        let result = single_task_infer(&task.x, &task.y, &selection, sigmas[k], k)?;
        records.extend(confidence_intervals(&result, alpha, &label));
    }
    Ok((records, active_sets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::barrier;
    use crate::types::{center_columns, TaskData};
    use approx::assert_relative_eq;
    use rand::Rng;

    fn dataset_with_signal(seed: u64, n: usize, p: usize, k: usize) -> MultiTaskDataset {
        let mut rng = StdRng::seed_from_u64(seed);
        let tasks = (0..k)
            .map(|_| {
                let mut x = DMatrix::from_fn(n, p, |_, _| rng.gen::<f64>() - 0.5);
                center_columns(&mut x);
                let beta = DVector::from_fn(p, |j, _| if j == 0 { 3.0 } else { 0.0 });
                let y = &x * beta + DVector::from_fn(n, |_, _| 0.4 * (rng.gen::<f64>() - 0.5));
                TaskData {
                    x,
                    y,
                    sigma: Some(1.0),
                }
            })
            .collect();
        MultiTaskDataset::new(tasks).unwrap()
    }

    #[test]
    fn equivalence_pairs() {
        assert_relative_eq!(randomizer_equivalent_scale(0.5), 1.0, max_relative = 1e-12);
        assert!((randomizer_equivalent_scale(0.67) - 0.70).abs() < 0.005);
    }

    #[test]
    fn split_halves_partition_the_samples() {
        let ds = dataset_with_signal(1, 31, 4, 2);
        let plan = SplitPlan::draw(&ds, 0.5, 7).unwrap();
        for k in 0..2 {
            assert_eq!(plan.selection[k].len(), 16); // [0.5 * 31] rounds up
            let mut all: Vec<usize> = plan.selection[k]
                .iter()
                .chain(plan.inference[k].iter())
                .copied()
                .collect();
            all.sort_unstable();
            assert_eq!(all, (0..31).collect::<Vec<_>>());
        }
        // Determinism in the seed.
        let again = SplitPlan::draw(&ds, 0.5, 7).unwrap();
        assert_eq!(plan.selection, again.selection);
        let other = SplitPlan::draw(&ds, 0.5, 8).unwrap();
        assert_ne!(plan.selection, other.selection);
    }

    #[test]
    fn naive_halfwidths_scale_with_sigma() {
        let ds = dataset_with_signal(2, 40, 3, 1);
        let sets = vec![vec![0, 1]];
        let narrow = naive_inference(&ds, &sets, 0.1, &[1.0]).unwrap();
        let wide = naive_inference(&ds, &sets, 0.1, &[2.0]).unwrap();
        for (a, b) in narrow.iter().zip(&wide) {
            assert_relative_eq!(2.0 * a.length(), b.length(), max_relative = 1e-12);
            // Symmetric around the estimate.
            assert_relative_eq!(a.estimate, (a.lower + a.upper) / 2.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn split_inference_is_deterministic() {
        let ds = dataset_with_signal(3, 60, 5, 2);
        let cfg = MtlConfig::with_lambda(4.0);
        let (a, sets_a, _) = split_then_infer(&ds, 0.5, &cfg, 0.1, &[1.0, 1.0], 42).unwrap();
        let (b, sets_b, _) = split_then_infer(&ds, 0.5, &cfg, 0.1, &[1.0, 1.0], 42).unwrap();
        assert_eq!(sets_a, sets_b);
        assert_eq!(a, b);
    }

    #[test]
    fn fixed_model_classical_intervals_cover_at_the_nominal_rate() {
        // No selection: the z-intervals are exact, so empirical coverage
        // over replications sits in a tight binomial band around 0.9.
        let mut rng = StdRng::seed_from_u64(7);
        let beta = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let mut covered = 0;
        let total = 400;
        for _ in 0..total {
            let mut x = DMatrix::from_fn(40, 3, |_, _| rng.gen::<f64>() - 0.5);
            center_columns(&mut x);
            let noise = DVector::from_fn(40, |_, _| {
                use rand_distr::Distribution;
                rand_distr::StandardNormal.sample(&mut rng)
            });
            let y = &x * &beta + noise;
            let ds = MultiTaskDataset::new(vec![TaskData {
                x,
                y,
                sigma: Some(1.0),
            }])
            .unwrap();
            let ivs = naive_inference(&ds, &[vec![0, 1, 2]], 0.1, &[1.0]).unwrap();
            // Model contains the truth, so the target is beta itself.
            covered += ivs.iter().filter(|r| r.covers(beta[r.feature])).count();
        }
        let rate = covered as f64 / (3 * total) as f64;
        assert!((0.87..0.93).contains(&rate), "coverage {rate}");
    }

    #[test]
    fn split_with_no_leftover_degrees_of_freedom_errors() {
        let mut rng = StdRng::seed_from_u64(31);
        let mut x = DMatrix::from_fn(14, 10, |_, _| rng.gen::<f64>() - 0.5);
        center_columns(&mut x);
        let beta = DVector::from_fn(10, |j, _| if j < 4 { 4.0 } else { 0.0 });
        let y = &x * beta + DVector::from_fn(14, |_, _| 0.1 * rng.gen::<f64>());
        let ds = MultiTaskDataset::new(vec![TaskData {
            x,
            y,
            sigma: Some(1.0),
        }])
        .unwrap();
        // 12 of 14 samples go to selection; a small lambda selects more
        // features than the 2 held-out samples can support.
        let cfg = MtlConfig::with_lambda(0.05);
        let err = split_then_infer(&ds, 0.85, &cfg, 0.1, &[1.0], 3);
        assert!(matches!(err, Err(Error::DegreesOfFreedomExhausted { .. })));
    }

    #[test]
    fn single_task_matches_first_mtl_round_support() {
        // With identical draws and uniform weights, selection for one task
        // equals the initialization round of the multi-task loop.
        let ds = dataset_with_signal(4, 50, 6, 1);
        let spec = RandomizationSpec::new(0.8, 13).unwrap();
        let lasso = LassoConfig::default();
        let sel =
            single_task_select(&ds.task(0).x, &ds.task(0).y, 1.0, &spec, 0, 5.0, &lasso).unwrap();
        let omega = sample_randomization(6, &spec, spec.component_std(1.0, &ds.task(0).x), 0);
        let uniform = DVector::from_element(6, 5.0);
        let direct =
            solve_weighted_lasso(&ds.task(0).x, &ds.task(0).y, &omega, &uniform, &lasso, None)
                .unwrap();
        let support: Vec<usize> = direct
            .theta
            .iter()
            .enumerate()
            .filter(|(_, t)| **t != 0.0)
            .map(|(j, _)| j)
            .collect();
        assert_eq!(sel.active, support);
    }

    #[test]
    fn scalar_orthonormal_single_task_oracle() {
        // Identity design, one feature: every matrix is scalar. Check the
        // hand-computed Delta^{-1} = (1 + eps)^2 / omega-variance and match
        // the MLE against a dense grid search of the approximate
        // log-likelihood.
        let n = 64;
        let p = 1;
        let mut x = DMatrix::zeros(n, p);
        // Orthonormal column (after centering, column norm 1).
        for i in 0..n {
            x[(i, 0)] = if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        center_columns(&mut x);
        let col_norm = x.column(0).norm();
        x /= col_norm;
        let mut rng = StdRng::seed_from_u64(5);
        let y = &x * DVector::from_element(1, 2.5)
            + DVector::from_fn(n, |_, _| 0.5 * (rng.gen::<f64>() - 0.5));
        let spec = RandomizationSpec::new(1.0, 3).unwrap();
        let lasso = LassoConfig {
            ridge: crate::lasso::RidgePolicy::Fixed(1e-3),
            tol: 1e-12,
            ..LassoConfig::default()
        };
        let sel = single_task_select(&x, &y, 1.0, &spec, 0, 0.4, &lasso).unwrap();
        assert_eq!(sel.active, vec![0], "signal not selected");

        // Scalar oracle for Delta^{-1}: c2 = (gram + eps) * s = (1 + eps) s.
        let result = single_task_infer(&x, &y, &sel, 1.0, 0).unwrap();
        let ls = task_least_squares(&x, &y, &[0], 0).unwrap();

        let eps = 1e-3;
        let s = sel.signs[0];
        let c2 = (1.0 + eps) * s;
        let omega_var = 1.0;
        let delta = omega_var / (c2 * c2);
        // Rebuild the scalar system the long way and compare the MLE with a
        // grid search over beta.
        let c1 = -1.0_f64;
        let f_active = sel.lambda * s - 0.0; // beta_perp active row is 0
        let p_scalar = -delta * c2 * (1.0 / omega_var) * c1;
        let q_scalar = -delta * c2 * (1.0 / omega_var) * f_active;
        // Inactive rows are absent with p = 1.
        let sigma_beta = 1.0; // sigma^2 (X'X)^{-1} = 1
        let sigma_inv =
            1.0 / sigma_beta + c1 * (1.0 / omega_var) * c1 - p_scalar * (1.0 / delta) * p_scalar;
        let sigma = 1.0 / sigma_inv;
        let l = sigma / sigma_beta;
        let m =
            sigma * p_scalar * (1.0 / delta) * q_scalar - sigma * c1 * (1.0 / omega_var) * f_active;
        let beta_hat = ls.beta_e[0];

        let h = DMatrix::identity(1, 1);
        let g = DVector::zeros(1);
        let loglik = |beta: f64| {
            let mean = l * beta + m;
            let marg_var = delta + p_scalar * sigma * p_scalar;
            let inner = |v: f64| {
                let c = p_scalar * mean + q_scalar;
                0.5 * (v - c) * (v - c) / marg_var + barrier(&nalgebra::dvector![v], &h, &g).value
            };
            // Ternary search for the inner infimum over v > 0.
            let (mut lo, mut hi) = (1e-9, 50.0);
            for _ in 0..200 {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                if inner(m1) < inner(m2) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            let inf = inner((lo + hi) / 2.0);
            -0.5 * (beta_hat - mean) * (beta_hat - mean) / sigma + inf
        };
        let mut best = (f64::NEG_INFINITY, 0.0);
        let (mut blo, mut bhi) = (beta_hat - 6.0, beta_hat + 6.0);
        for _ in 0..6 {
            let mcount = 81;
            for i in 0..mcount {
                let beta = blo + (bhi - blo) * i as f64 / (mcount - 1) as f64;
                let v = loglik(beta);
                if v > best.0 {
                    best = (v, beta);
                }
            }
            let span = (bhi - blo) / (mcount - 1) as f64;
            blo = best.1 - 2.0 * span;
            bhi = best.1 + 2.0 * span;
        }
        assert!(
            (result.mle[0] - best.1).abs() <= 1e-4,
            "MLE {} vs grid {}",
            result.mle[0],
            best.1
        );
    }

    #[test]
    fn empty_single_task_selection_gives_empty_intervals() {
        let ds = dataset_with_signal(6, 30, 4, 1);
        let spec = RandomizationSpec::new(0.5, 2).unwrap();
        let lasso = LassoConfig::default();
        let (records, sets) = single_task_si(&ds, &spec, 1e6, &lasso, 0.1, &[1.0]).unwrap();
        assert!(records.is_empty());
        assert_eq!(sets, vec![Vec::<usize>::new()]);
    }
}
