//! Randomized, feature-weighted LASSO.
//!
//! Minimizes
//!   0.5 ||y - X theta||^2 - omega' theta + (eps/2) ||theta||^2
//!     + sum_j weight_j |theta_j|
//! by cyclic coordinate descent. The ridge term makes the objective strictly
//! convex, so the minimizer is unique and warm starts cannot change it.

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::types::RandomizationSpec;

/// Ridge strength for the selection objective.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum RidgePolicy {
    /// eps = factor * mean(diag(X'X)); tracks the scale of the design.
    ScaledToDesign { factor: f64 },
    /// eps fixed.
    Fixed(f64),
}

impl RidgePolicy {
    pub fn resolve(&self, x: &DMatrix<f64>) -> f64 {
        match *self {
            RidgePolicy::Fixed(eps) => eps,
            RidgePolicy::ScaledToDesign { factor } => {
                let p = x.ncols();
                let mean_diag = x.column_iter().map(|c| c.norm_squared()).sum::<f64>() / p as f64;
                factor * mean_diag
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LassoConfig {
    pub ridge: RidgePolicy,
    /// Stop when the largest stationarity violation falls below this.
    pub tol: f64,
    /// Maximum number of full coordinate sweeps.
    pub max_iter: usize,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            ridge: RidgePolicy::ScaledToDesign { factor: 1e-4 },
            tol: 1e-8,
            max_iter: 5000,
        }
    }
}

impl LassoConfig {
    pub fn validate(&self) -> Result<()> {
        let eps_ok = match self.ridge {
            RidgePolicy::Fixed(eps) => eps > 0.0,
            RidgePolicy::ScaledToDesign { factor } => factor > 0.0,
        };
        if !eps_ok {
            return Err(Error::InvalidConfig {
                message: "ridge epsilon must be positive".into(),
            });
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidConfig {
                message: "tolerance and max_iter must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Draws a length-p randomization vector with i.i.d. N(0, std^2)
/// components, deterministic under (spec.seed, task). Callers supply the
/// component standard deviation, usually [`RandomizationSpec::component_std`].
pub fn sample_randomization(
    p: usize,
    spec: &RandomizationSpec,
    std: f64,
    task: usize,
) -> DVector<f64> {
    if std == 0.0 {
        return DVector::zeros(p);
    }
    let mut rng = StdRng::seed_from_u64(seed::derive(spec.seed, task as u64));
    DVector::from_iterator(
        p,
        (0..p).map(|_| {
            std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        }),
    )
}

/// Converged solution with the diagnostics needed downstream.
#[derive(Debug, Clone)]
pub struct LassoSolution {
    pub theta: DVector<f64>,
    /// Largest stationarity violation at exit.
    pub kkt_residual: f64,
    pub sweeps: usize,
    /// Ridge epsilon actually used.
    pub ridge: f64,
}

/// Solves the weighted randomized LASSO. `init` warm-starts the sweep.
pub fn solve_weighted_lasso(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    omega: &DVector<f64>,
    weights: &DVector<f64>,
    config: &LassoConfig,
    init: Option<&DVector<f64>>,
) -> Result<LassoSolution> {
    config.validate()?;
    let p = x.ncols();
    if weights.len() != p || omega.len() != p {
        return Err(Error::DimensionMismatch {
            what: "weights/omega",
            expected: p,
            got: weights.len().min(omega.len()),
        });
    }
    if weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::InvalidConfig {
            message: "penalty weights must be positive".into(),
        });
    }
    let eps = config.ridge.resolve(x);

    let col_sq: Vec<f64> = x.column_iter().map(|c| c.norm_squared()).collect();
    let mut theta = match init {
        Some(t) if t.len() == p => t.clone(),
        _ => DVector::zeros(p),
    };
    let mut residual = y - x * &theta;

    let mut last_violation = f64::INFINITY;
    for sweep in 0..config.max_iter {
        for j in 0..p {
            let old = theta[j];
            // rho = X_j'(y - X theta_{-j}) + omega_j
            let rho = x.column(j).dot(&residual) + col_sq[j] * old + omega[j];
            let denom = col_sq[j] + eps;
            let new = soft_threshold(rho, weights[j]) / denom;
            if new != old {
                residual.axpy(old - new, &x.column(j), 1.0);
                theta[j] = new;
            }
        }
        last_violation = kkt_violation(x, &residual, omega, weights, eps, &theta);
        if last_violation <= config.tol {
            return Ok(LassoSolution {
                theta,
                kkt_residual: last_violation,
                sweeps: sweep + 1,
                ridge: eps,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "coordinate descent",
        iterations: config.max_iter,
        residual: last_violation,
        last_iterate: Some(theta.as_slice().to_vec()),
    })
}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Largest violation of the stationarity conditions at `theta`:
/// active coordinates must satisfy X_j'r + omega_j - eps theta_j = w_j sign,
/// inactive ones |X_j'r + omega_j| <= w_j.
fn kkt_violation(
    x: &DMatrix<f64>,
    residual: &DVector<f64>,
    omega: &DVector<f64>,
    weights: &DVector<f64>,
    eps: f64,
    theta: &DVector<f64>,
) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..x.ncols() {
        let grad = x.column(j).dot(residual) + omega[j] - eps * theta[j];
        let v = if theta[j] != 0.0 {
            (grad - weights[j] * theta[j].signum()).abs()
        } else {
            (grad.abs() - weights[j]).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Signs, inactive subgradient and stationarity residual of a solution.
///
/// The subgradient entries follow the stationarity identity
/// u_j = (X_j'(y - X theta) + omega_j) / weight_j on the inactive set.
pub struct KktDecomposition {
    /// Active feature indices, ascending.
    pub active: Vec<usize>,
    /// Signs on the active set.
    pub signs: DVector<f64>,
    /// Magnitudes on the active set.
    pub magnitudes: DVector<f64>,
    /// Subgradient on the inactive set (complement, ascending).
    pub subgradient: DVector<f64>,
    /// Largest stationarity violation.
    pub residual: f64,
}

pub fn kkt_decompose(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    omega: &DVector<f64>,
    weights: &DVector<f64>,
    eps: f64,
    theta: &DVector<f64>,
    tol: f64,
) -> Result<KktDecomposition> {
    let p = x.ncols();
    let residual_vec = y - x * theta;
    let mut active = Vec::new();
    let mut signs = Vec::new();
    let mut mags = Vec::new();
    let mut sub = Vec::new();
    let mut worst: f64 = 0.0;
    for j in 0..p {
        let grad = x.column(j).dot(&residual_vec) + omega[j] - eps * theta[j];
        if theta[j] != 0.0 {
            active.push(j);
            signs.push(theta[j].signum());
            mags.push(theta[j].abs());
            worst = worst.max((grad - weights[j] * theta[j].signum()).abs());
        } else {
            sub.push(grad / weights[j]);
            worst = worst.max((grad.abs() - weights[j]).max(0.0));
        }
    }
    if worst > 10.0 * tol {
        return Err(Error::KktViolation {
            residual: worst,
            limit: 10.0 * tol,
        });
    }
    Ok(KktDecomposition {
        active,
        signs: DVector::from_vec(signs),
        magnitudes: DVector::from_vec(mags),
        subgradient: DVector::from_vec(sub),
        residual: worst,
    })
}

/// Value of the randomized loss plus weighted l1 penalty at `theta`.
pub fn objective(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    omega: &DVector<f64>,
    weights: &DVector<f64>,
    eps: f64,
    theta: &DVector<f64>,
) -> f64 {
    let r = y - x * theta;
    0.5 * r.norm_squared() - omega.dot(theta)
        + 0.5 * eps * theta.norm_squared()
        + weights
            .iter()
            .zip(theta.iter())
            .map(|(w, t)| w * t.abs())
            .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn orthonormal_design() -> (DMatrix<f64>, DVector<f64>) {
        // Columns orthonormal with X'y = (2, 0.1). Identity design keeps the
        // arithmetic exact.
        let x = DMatrix::identity(2, 2);
        let y = DVector::from_vec(vec![2.0, 0.1]);
        (x, y)
    }

    #[test]
    fn orthogonal_design_soft_thresholds() {
        let (x, y) = orthonormal_design();
        let cfg = LassoConfig {
            ridge: RidgePolicy::Fixed(1e-12),
            ..LassoConfig::default()
        };
        let w = DVector::from_element(2, 0.5);
        let sol = solve_weighted_lasso(&x, &y, &DVector::zeros(2), &w, &cfg, None).unwrap();
        assert_relative_eq!(sol.theta[0], 1.5, max_relative = 1e-8);
        assert_eq!(sol.theta[1], 0.0);
    }

    #[test]
    fn infinite_penalty_gives_zero() {
        let mut rng = StdRng::seed_from_u64(1);
        let x = DMatrix::from_fn(20, 5, |_, _| rng.gen::<f64>() - 0.5);
        let y = DVector::from_fn(20, |_, _| rng.gen::<f64>());
        let w = DVector::from_element(5, 1e12);
        let sol = solve_weighted_lasso(
            &x,
            &y,
            &DVector::zeros(5),
            &w,
            &LassoConfig::default(),
            None,
        )
        .unwrap();
        assert_eq!(sol.theta, DVector::zeros(5));
    }

    #[test]
    fn solution_beats_random_perturbations() {
        let mut rng = StdRng::seed_from_u64(7);
        let x = DMatrix::from_fn(50, 20, |_, _| rng.gen::<f64>() - 0.5);
        let y = DVector::from_fn(50, |_, _| 2.0 * rng.gen::<f64>() - 1.0);
        let omega = DVector::from_fn(20, |_, _| 0.3 * (rng.gen::<f64>() - 0.5));
        let w = DVector::from_fn(20, |_, _| 0.5 + rng.gen::<f64>());
        let cfg = LassoConfig::default();
        let sol = solve_weighted_lasso(&x, &y, &omega, &w, &cfg, None).unwrap();
        let eps = cfg.ridge.resolve(&x);
        let best = objective(&x, &y, &omega, &w, eps, &sol.theta);
        for _ in 0..1000 {
            let delta = DVector::from_fn(20, |_, _| 0.02 * (rng.gen::<f64>() - 0.5));
            let probe = &sol.theta + delta;
            assert!(objective(&x, &y, &omega, &w, eps, &probe) >= best - 1e-10);
        }
    }

    #[test]
    fn kkt_decomposition_matches_closed_form() {
        let (x, y) = orthonormal_design();
        let cfg = LassoConfig {
            ridge: RidgePolicy::Fixed(1e-12),
            ..LassoConfig::default()
        };
        let w = DVector::from_element(2, 0.5);
        let omega = DVector::zeros(2);
        let sol = solve_weighted_lasso(&x, &y, &omega, &w, &cfg, None).unwrap();
        let d = kkt_decompose(&x, &y, &omega, &w, sol.ridge, &sol.theta, cfg.tol).unwrap();
        assert_eq!(d.active, vec![0]);
        // u = (X'y)_2 / w_2 = 0.1 / 0.5
        assert_relative_eq!(d.subgradient[0], 0.2, max_relative = 1e-9);
        assert!(d.residual < 1e-9);
    }

    #[test]
    fn zero_solution_subgradient() {
        let (x, y) = orthonormal_design();
        let w = DVector::from_element(2, 10.0);
        let omega = DVector::from_vec(vec![0.5, -0.25]);
        let theta = DVector::zeros(2);
        let d = kkt_decompose(&x, &y, &omega, &w, 1e-6, &theta, 1e-8).unwrap();
        assert!(d.active.is_empty());
        // u = (X'y + omega) / w componentwise
        assert_relative_eq!(d.subgradient[0], 2.5 / 10.0, max_relative = 1e-12);
        assert_relative_eq!(d.subgradient[1], -0.15 / 10.0, max_relative = 1e-12);
    }

    #[test]
    fn perturbed_solution_is_flagged() {
        let mut rng = StdRng::seed_from_u64(3);
        let x = DMatrix::from_fn(30, 6, |_, _| rng.gen::<f64>() - 0.5);
        let y = DVector::from_fn(30, |_, _| rng.gen::<f64>());
        let omega = DVector::zeros(6);
        let w = DVector::from_element(6, 0.4);
        let cfg = LassoConfig::default();
        let sol = solve_weighted_lasso(&x, &y, &omega, &w, &cfg, None).unwrap();
        let mut theta = sol.theta.clone();
        let j = theta
            .iter()
            .position(|&t| t != 0.0)
            .expect("expected a nonzero coordinate");
        theta[j] += 0.1;
        let err = kkt_decompose(&x, &y, &omega, &w, sol.ridge, &theta, cfg.tol);
        assert!(matches!(err, Err(Error::KktViolation { .. })));
    }

    #[test]
    fn randomization_is_deterministic_and_scaled() {
        let spec = RandomizationSpec::new(1.0, 42).unwrap();
        let a = sample_randomization(10_000, &spec, 1.0, 0);
        let b = sample_randomization(10_000, &spec, 1.0, 0);
        assert_eq!(a, b);
        let c = sample_randomization(10_000, &spec, 1.0, 1);
        assert_ne!(a, c);
        // Law of large numbers: sample variance within 5% of v^2 sigma^2 = 1.
        let var = a.norm_squared() / a.len() as f64;
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
        // v = 0 degenerates to the zero vector.
        let zero_spec = RandomizationSpec::new(0.0, 42).unwrap();
        let x = DMatrix::identity(8, 8);
        assert_eq!(zero_spec.component_std(1.0, &x), 0.0);
        assert_eq!(
            sample_randomization(8, &zero_spec, 0.0, 0),
            DVector::zeros(8)
        );
        // Unit-norm columns: the component std reduces to v * sigma.
        assert_eq!(spec.component_std(2.0, &x), 2.0);
    }

    #[test]
    fn warm_start_reaches_same_minimizer() {
        let mut rng = StdRng::seed_from_u64(11);
        let x = DMatrix::from_fn(40, 8, |_, _| rng.gen::<f64>() - 0.5);
        let y = DVector::from_fn(40, |_, _| rng.gen::<f64>());
        let omega = DVector::from_fn(8, |_, _| 0.1 * rng.gen::<f64>());
        let w = DVector::from_element(8, 0.3);
        let cfg = LassoConfig {
            tol: 1e-12,
            ..LassoConfig::default()
        };
        let cold = solve_weighted_lasso(&x, &y, &omega, &w, &cfg, None).unwrap();
        let start = DVector::from_element(8, 0.7);
        let warm = solve_weighted_lasso(&x, &y, &omega, &w, &cfg, Some(&start)).unwrap();
        assert_relative_eq!(cold.theta, warm.theta, epsilon = 1e-9);
    }

    #[test]
    fn tilt_and_score_shift_consistently() {
        // The stationarity identity depends on the data only through
        // X'y + omega: moving a vector c from the score into the tilt
        // leaves the minimizer unchanged.
        let mut rng = StdRng::seed_from_u64(21);
        let x = DMatrix::from_fn(20, 3, |_, _| rng.gen::<f64>() - 0.5);
        let y = DVector::from_fn(20, |_, _| rng.gen::<f64>());
        let w = DVector::from_element(3, 0.4);
        let cfg = LassoConfig {
            tol: 1e-12,
            ..LassoConfig::default()
        };
        let c = DVector::from_fn(3, |_, _| rng.gen::<f64>() - 0.5);
        let base = solve_weighted_lasso(&x, &y, &c, &w, &cfg, None).unwrap();
        // Fold c into the response: X'y2 = X'y + c.
        let gram_inv = (x.transpose() * &x).try_inverse().unwrap();
        let y2 = &y + &x * (gram_inv * &c);
        let folded = solve_weighted_lasso(&x, &y2, &DVector::zeros(3), &w, &cfg, None).unwrap();
        for j in 0..3 {
            approx::assert_relative_eq!(base.theta[j], folded.theta[j], epsilon = 1e-8);
        }
    }

    #[test]
    fn objective_never_increases_across_sweeps() {
        // Strict convexity from the ridge makes every sweep a descent step.
        let mut rng = StdRng::seed_from_u64(5);
        let x = DMatrix::from_fn(25, 10, |_, _| rng.gen::<f64>() - 0.5);
        let y = DVector::from_fn(25, |_, _| rng.gen::<f64>());
        let omega = DVector::zeros(10);
        let w = DVector::from_element(10, 0.2);
        let eps = 0.05;
        let cfg = LassoConfig {
            ridge: RidgePolicy::Fixed(eps),
            tol: 1e-10,
            max_iter: 1,
        };
        // Run sweep by sweep via warm starts and track the objective.
        let mut theta = DVector::zeros(10);
        let mut last = objective(&x, &y, &omega, &w, eps, &theta);
        for _ in 0..50 {
            match solve_weighted_lasso(&x, &y, &omega, &w, &cfg, Some(&theta)) {
                Ok(sol) => {
                    theta = sol.theta;
                }
                Err(Error::NonConvergence { last_iterate, .. }) => {
                    theta = DVector::from_vec(last_iterate.unwrap());
                }
                Err(e) => panic!("{e}"),
            }
            let now = objective(&x, &y, &omega, &w, eps, &theta);
            assert!(now <= last + 1e-12);
            last = now;
        }
    }
}
