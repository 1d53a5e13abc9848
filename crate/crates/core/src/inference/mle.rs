//! Estimating equations for the approximate selective MLE and its observed
//! information, plus interval construction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::barrier::{barrier, BarrierSolve};
use crate::inference::{InferenceMatrices, IntervalRecord};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub barrier_iterations: usize,
    pub barrier_grad_norm: f64,
}

/// Selective MLE with its inverse observed information.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferenceResult {
    /// Point estimates, one per selected (task, feature) pair.
    pub mle: DVector<f64>,
    /// Inverse observed information, symmetric positive definite.
    pub inv_info: DMatrix<f64>,
    pub labels: Vec<(usize, usize)>,
    pub diagnostics: SolveDiagnostics,
}

impl InferenceResult {
    pub fn empty() -> Self {
        Self {
            mle: DVector::zeros(0),
            inv_info: DMatrix::zeros(0, 0),
            labels: Vec::new(),
            diagnostics: SolveDiagnostics::default(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Evaluates the estimating equations at the solved mode:
///   beta_MLE = L^{-1} beta_E + L^{-1} Sigma P' Delta^{-1} (P beta_E + q - V)
///              - L^{-1} m,
///   I^{-1}   = L^{-1} Sigma L'^{-1}
///              + L^{-1} Sigma (P' Delta^{-1} P
///                - P' Delta^{-1} (Delta^{-1} + hess phi(V))^{-1} Delta^{-1} P)
///                Sigma L'^{-1}.
/// Since L = Sigma SigmaBeta^{-1}, the recurring product L^{-1} Sigma equals
/// SigmaBeta, which is how the products are formed here.
pub fn selective_mle(mats: &InferenceMatrices, solve: &BarrierSolve) -> Result<InferenceResult> {
    let v_hat = &solve.v;
    let q = mats.q();

    let sb = &mats.sigma_beta;
    let sb_sigma_inv = sb * &mats.sigma_inv; // = L^{-1}

    let mle = if mats.v_dim() == 0 {
        &sb_sigma_inv * (&mats.beta_e - &mats.m_vec)
    } else {
        let residual = &mats.p_mat * &mats.beta_e + &mats.q_vec - v_hat;
        &sb_sigma_inv * (&mats.beta_e - &mats.m_vec)
            + sb * (mats.p_mat.transpose() * (&mats.delta_inv * residual))
    };

    // L^{-1} Sigma L'^{-1} = SigmaBeta Sigma^{-1} SigmaBeta.
    let base = &sb_sigma_inv * sb;
    let mut inv_info = base;
    if mats.v_dim() > 0 {
        let phi = barrier(v_hat, &mats.h, &mats.g);
        if !phi.value.is_finite() {
            return Err(Error::InfeasibleStart);
        }
        let inner = (&mats.delta_inv + &phi.hess)
            .cholesky()
            .ok_or(Error::NotPositiveDefinite {
                name: "Delta^{-1} + hess phi",
            })?
            .inverse();
        let dp = &mats.delta_inv * &mats.p_mat; // Delta^{-1} P
        let correction = mats.p_mat.transpose() * &dp - dp.transpose() * &inner * &dp;
        inv_info += sb * correction * sb;
    }
    // Enforce exact symmetry before the definiteness check.
    let inv_info = (&inv_info + inv_info.transpose()) * 0.5;
    if inv_info.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite {
            name: "inverse observed information",
        });
    }

    debug_assert_eq!(mats.labels.len(), q);
    Ok(InferenceResult {
        mle,
        inv_info,
        labels: mats.labels.clone(),
        diagnostics: SolveDiagnostics {
            barrier_iterations: solve.iterations,
            barrier_grad_norm: solve.grad_norm,
        },
    })
}

/// Intervals MLE_j +- z_{1-alpha/2} sqrt((I^{-1})_{jj}), labeled by
/// (task, feature).
pub fn confidence_intervals(
    result: &InferenceResult,
    alpha: f64,
    method: &str,
) -> Vec<IntervalRecord> {
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must be in (0, 1)");
    let z = z_quantile(1.0 - alpha / 2.0);
    result
        .labels
        .iter()
        .enumerate()
        .map(|(i, &(task, feature))| {
            let stderr = result.inv_info[(i, i)].sqrt();
            let center = result.mle[i];
            IntervalRecord {
                task,
                feature,
                estimate: center,
                lower: center - z * stderr,
                upper: center + z * stderr,
                stderr,
                method: method.to_string(),
                alpha,
            }
        })
        .collect()
}

/// Standard normal quantile (Wichura's PPND16 rational approximation,
/// accurate to ~1e-15 relative error).
pub fn z_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile argument must be in (0, 1)");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let value = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

fn poly(coef: &[f64], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

// Published PPND16 coefficients, kept verbatim with their guard digits.
#[rustfmt::skip]
#[allow(clippy::excessive_precision)]
const A: [f64; 8] = [
    3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
    1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
    3.3430575583588128105e4, 2.5090809287301226727e3,
];
#[rustfmt::skip]
#[allow(clippy::excessive_precision)]
const B: [f64; 8] = [
    1.0, 4.2313330701600911252e1, 6.8718700749205790830e2,
    5.3941960214247511077e3, 2.1213794301586595867e4, 3.9307895800092710610e4,
    2.8729085735721942674e4, 5.2264952788528545610e3,
];
#[rustfmt::skip]
#[allow(clippy::excessive_precision)]
const C: [f64; 8] = [
    1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
    3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
    2.27238449892691845833e-2, 7.74545014278341407640e-4,
];
#[rustfmt::skip]
#[allow(clippy::excessive_precision)]
const D: [f64; 8] = [
    1.0, 2.05319162663775882187e0, 1.67638483018380384940e0,
    6.89767334985100004550e-1, 1.48103976427480074590e-1, 1.51986665636164571966e-2,
    5.47593808499534494600e-4, 1.05075007164441684324e-9,
];
#[rustfmt::skip]
#[allow(clippy::excessive_precision)]
const E: [f64; 8] = [
    6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
    2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
    2.71155556874348757815e-5, 2.01033439929228813265e-7,
];
#[rustfmt::skip]
#[allow(clippy::excessive_precision)]
const F: [f64; 8] = [
    1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1,
    1.48753612908506148525e-2, 7.86869131145613259100e-4, 1.84631831751005468180e-5,
    1.42151175831644588870e-7, 2.04426310338993978564e-15,
];
