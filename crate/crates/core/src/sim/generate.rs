//! Synthetic data generation: equicorrelated designs, shared-sparsity
//! coefficients, Gaussian noise.

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::seed;
use crate::types::{center_columns, MultiTaskDataset, TaskData};

/// Rounds half away from zero, the convention for every [.] count here.
pub fn round_half_up(x: f64) -> usize {
    x.round() as usize
}

/// Equicorrelation matrix T(rho): unit diagonal, rho off-diagonal.
pub fn equicorrelation(p: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho })
}

fn check_rho(p: usize, rho: f64) -> Result<()> {
    let lower = if p > 1 { -1.0 / (p as f64 - 1.0) } else { -1.0 };
    if !(rho > lower && rho < 1.0) {
        return Err(Error::InvalidConfig {
            message: format!("rho = {rho} outside the valid range ({lower}, 1) for p = {p}"),
        });
    }
    Ok(())
}

/// n rows sampled from N(0, T(rho)), columns centered afterwards.
pub fn generate_design(n: usize, p: usize, rho: f64, seed: u64) -> Result<DMatrix<f64>> {
    check_rho(p, rho)?;
    let chol = equicorrelation(p, rho)
        .cholesky()
        .ok_or(Error::NotPositiveDefinite {
            name: "equicorrelation T(rho)",
        })?;
    let l = chol.l();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let z = DVector::from_fn(p, |_, _| {
            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        });
        let row = &l * z;
        for j in 0..p {
            x[(i, j)] = row[j];
        }
    }
    center_columns(&mut x);
    Ok(x)
}

/// Coefficient matrix (p x K) with [s_g p] globally null rows; each
/// remaining row gets [s_t K] zeros placed independently, and its nonzero
/// entries are drawn without replacement from K equally spaced magnitudes
/// covering [sqrt(2 log p), sqrt(6 log p)], with random signs.
pub fn generate_coefficients(
    p: usize,
    k: usize,
    s_global: f64,
    s_task: f64,
    seed: u64,
) -> Result<DMatrix<f64>> {
    for (name, s) in [("s_global", s_global), ("s_task", s_task)] {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::InvalidConfig {
                message: format!("{name} = {s} outside [0, 1]"),
            });
        }
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut beta = DMatrix::zeros(p, k);

    let n_null = round_half_up(s_global * p as f64).min(p);
    let mut rows: Vec<usize> = (0..p).collect();
    rows.shuffle(&mut rng);
    let active_rows: Vec<usize> = rows[n_null..].to_vec();

    let lo = (2.0 * (p as f64).ln()).sqrt();
    let hi = (6.0 * (p as f64).ln()).sqrt();
    let grid: Vec<f64> = if k == 1 {
        vec![lo]
    } else {
        (0..k)
            .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
            .collect()
    };

    let zeros_per_row = round_half_up(s_task * k as f64).min(k);
    for &j in &active_rows {
        let mut cols: Vec<usize> = (0..k).collect();
        cols.shuffle(&mut rng);
        let live = &cols[zeros_per_row..];
        let mut magnitudes = grid.clone();
        magnitudes.shuffle(&mut rng);
        for (i, &col) in live.iter().enumerate() {
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            beta[(j, col)] = sign * magnitudes[i];
        }
    }
    Ok(beta)
}

/// Signal-to-noise ratio beta' T(rho) beta / (n sigma^2), via the closed
/// form (1 - rho) ||beta||^2 + rho (sum beta)^2.
pub fn snr(beta: &DVector<f64>, rho: f64, n: usize, sigma: f64) -> f64 {
    let sum: f64 = beta.sum();
    let quad = (1.0 - rho) * beta.norm_squared() + rho * sum * sum;
    quad / (n as f64 * sigma * sigma)
}

/// One replication's dataset: per-task design, linear signal, N(0, sigma^2)
/// noise. Deterministic in `seed`.
pub fn generate_dataset(
    n: usize,
    p: usize,
    rho: f64,
    beta: &DMatrix<f64>,
    sigma: f64,
    seed: u64,
) -> Result<MultiTaskDataset> {
    let k = beta.ncols();
    let mut tasks = Vec::with_capacity(k);
    for task in 0..k {
        let x = generate_design(n, p, rho, seed::derive2(seed, 0xD, task as u64))?;
        let mut rng = StdRng::seed_from_u64(seed::derive2(seed, 0xE, task as u64));
        let noise = DVector::from_fn(n, |_, _| {
            sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        });
        let y = &x * beta.column(task) + noise;
        tasks.push(TaskData {
            x,
            y,
            sigma: Some(sigma),
        });
    }
    MultiTaskDataset::new(tasks)
}
