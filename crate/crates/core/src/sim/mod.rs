//! Seeded Monte Carlo experiments comparing selection-and-inference methods.
//!
//! Replications are independent work units: each derives its own RNG streams
//! from (master seed, replication index, method index), so the metric tables
//! are bit-identical across runs and across thread counts. The data for one
//! replication is shared by all methods; only the randomization draws differ
//! per method.

pub mod generate;
mod metrics;
mod tune;

pub use generate::{
    equicorrelation, generate_coefficients, generate_dataset, generate_design, round_half_up, snr,
};
pub use metrics::{compute_metrics, projected_target, MetricsRecord, MetricsView};
pub use tune::{fitted_coefficients, tune_lambda, validation_mse, TuningRecord};

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{naive_inference, single_task_si, split_then_infer};
use crate::error::{Error, Result};
use crate::inference::{confidence_intervals, infer_mtl, IntervalRecord};
use crate::lasso::{LassoConfig, RidgePolicy};
use crate::mtl::{run_mtl_selection, uniform_lambda_max, MtlConfig};
use crate::seed;
use crate::types::{MultiTaskDataset, RandomizationSpec};

/// A method under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Method {
    /// Randomized multi-task selection plus selective inference.
    MtlSi { scale: f64 },
    /// Per-task randomized LASSO plus selective inference.
    SingleTaskSi { scale: f64 },
    /// Data splitting DS(s): non-randomized selection on a fraction of the
    /// samples, classical intervals on the remainder.
    DataSplit { fraction: f64 },
    /// Non-randomized selection and unadjusted intervals on the same data.
    Naive,
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::MtlSi { scale } => format!("MTL({scale})+SI"),
            Method::SingleTaskSi { scale } => format!("LASSO({scale})+SI"),
            Method::DataSplit { fraction } => format!("DS({fraction})"),
            Method::Naive => "Naive".to_string(),
        }
    }
}

/// Solver knobs shared by every method in an experiment.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Ridge epsilon as a fraction of the mean design Gram diagonal.
    pub ridge_factor: f64,
    /// Inner KKT tolerance. Tight enough that the affine reconstruction of
    /// the randomization holds to 1e-8.
    pub lasso_tol: f64,
    pub lasso_max_iter: usize,
    pub outer_tol: f64,
    pub max_outer: usize,
    /// lambda0 = lambda0_factor * lambda.
    pub lambda0_factor: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            ridge_factor: 1e-4,
            lasso_tol: 1e-10,
            lasso_max_iter: 20_000,
            outer_tol: 1e-6,
            max_outer: 100,
            lambda0_factor: 50.0,
        }
    }
}

impl SolverSettings {
    pub fn lasso_config(&self) -> LassoConfig {
        LassoConfig {
            ridge: RidgePolicy::ScaledToDesign {
                factor: self.ridge_factor,
            },
            tol: self.lasso_tol,
            max_iter: self.lasso_max_iter,
        }
    }

    pub fn mtl_config(&self, lambda: f64) -> MtlConfig {
        MtlConfig {
            lambda,
            lambda0: self.lambda0_factor * lambda,
            outer_tol: self.outer_tol,
            max_outer: self.max_outer,
            lasso: self.lasso_config(),
        }
    }
}

/// Lambda grid specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GridSpec {
    Explicit(Vec<f64>),
    /// `count` log-spaced values in [lo_frac, hi_frac] * lambda_max, where
    /// lambda_max is the smallest uniform weight that zeroes the initial
    /// solution of the tuning data.
    Scaled {
        count: usize,
        lo_frac: f64,
        hi_frac: f64,
    },
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Scaled {
            count: 20,
            lo_frac: 0.05,
            hi_frac: 2.0,
        }
    }
}

impl GridSpec {
    /// Concrete grid values against a reference dataset.
    pub fn materialize(&self, reference: &MultiTaskDataset) -> Result<Vec<f64>> {
        match self {
            GridSpec::Explicit(values) => Ok(values.clone()),
            GridSpec::Scaled {
                count,
                lo_frac,
                hi_frac,
            } => {
                if *count == 0 || !(0.0 < *lo_frac && lo_frac < hi_frac) {
                    return Err(Error::InvalidConfig {
                        message: "grid needs count >= 1 and 0 < lo < hi".into(),
                    });
                }
                let zeros = vec![nalgebra::DVector::zeros(reference.p()); reference.k()];
                let lambda_max = uniform_lambda_max(reference, &zeros);
                let (lo, hi) = (lo_frac * lambda_max, hi_frac * lambda_max);
                if *count == 1 {
                    return Ok(vec![hi]);
                }
                Ok((0..*count)
                    .map(|i| {
                        (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (*count as f64 - 1.0)).exp()
                    })
                    .collect())
            }
        }
    }
}

/// How each method obtains its tuning parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LambdaRule {
    /// One value for every method and replication.
    Fixed(f64),
    /// Tune once per method on dedicated auxiliary replications, then hold
    /// the winner fixed for the reported replications.
    TuneAux { grid: GridSpec, aux_reps: usize },
    /// Tune per replication on a validation copy of the data.
    TunePerRep { grid: GridSpec },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub rho: f64,
    pub s_global: f64,
    pub s_task: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub replications: usize,
    pub master_seed: u64,
    pub lambda: LambdaRule,
    pub solver: SolverSettings,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |message: String| Err(Error::InvalidConfig { message });
        if self.n == 0 || self.p == 0 || self.k == 0 || self.replications == 0 {
            return bad("n, p, K and replications must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.s_global) || !(0.0..=1.0).contains(&self.s_task) {
            return bad("sparsity levels must lie in [0, 1]".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha = {} outside (0, 1)", self.alpha));
        }
        if !(self.sigma > 0.0) {
            return bad("sigma must be positive".into());
        }
        if let LambdaRule::Fixed(l) = &self.lambda {
            if !(*l > 0.0) {
                return bad("fixed lambda must be positive".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailureRecord {
    pub method: String,
    pub replication: usize,
    pub error: String,
}

/// Everything one experiment produces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub records: Vec<MetricsRecord>,
    pub tuning: Vec<TuningRecord>,
    pub failures: Vec<FailureRecord>,
}

// Stream labels for seed derivation.
const STREAM_DATA: u64 = 0xDA;
const STREAM_AUX: u64 = 0xAA;
const STREAM_BETA: u64 = 1;
const STREAM_TRAIN: u64 = 2;
const STREAM_VAL: u64 = 3;
const STREAM_METHOD: u64 = 0x4A;

fn replication_inputs(
    cfg: &SimConfig,
    stream: u64,
    rep: usize,
    with_validation: bool,
) -> Result<(
    nalgebra::DMatrix<f64>,
    MultiTaskDataset,
    Option<MultiTaskDataset>,
    u64,
)> {
    let data_seed = seed::derive2(cfg.master_seed, stream, rep as u64);
    let beta = generate_coefficients(
        cfg.p,
        cfg.k,
        cfg.s_global,
        cfg.s_task,
        seed::derive(data_seed, STREAM_BETA),
    )?;
    let train = generate_dataset(
        cfg.n,
        cfg.p,
        cfg.rho,
        &beta,
        cfg.sigma,
        seed::derive(data_seed, STREAM_TRAIN),
    )?;
    let val = if with_validation {
        Some(generate_dataset(
            cfg.n,
            cfg.p,
            cfg.rho,
            &beta,
            cfg.sigma,
            seed::derive(data_seed, STREAM_VAL),
        )?)
    } else {
        None
    };
    Ok((beta, train, val, data_seed))
}

/// One method's output on one replication's data.
pub struct MethodRun {
    pub intervals: Vec<IntervalRecord>,
    pub active_sets: Vec<Vec<usize>>,
    /// The data the intervals refer to, when it differs from the training
    /// data (data splitting infers on its held-out half).
    pub inference_data: Option<MultiTaskDataset>,
}

/// Runs one method on one replication's data.
pub fn run_method(
    method: &Method,
    dataset: &MultiTaskDataset,
    lambda: f64,
    solver: &SolverSettings,
    alpha: f64,
    sigmas: &[f64],
    rand_seed: u64,
) -> Result<MethodRun> {
    match method {
        Method::MtlSi { scale } => {
            let spec = RandomizationSpec::new(*scale, rand_seed)?;
            let outcome = run_mtl_selection(dataset, &spec, &solver.mtl_config(lambda))?;
            let active_sets: Vec<Vec<usize>> =
                outcome.tasks.iter().map(|t| t.active.clone()).collect();
            let result = infer_mtl(dataset, &outcome, sigmas)?;
            Ok(MethodRun {
                intervals: confidence_intervals(&result, alpha, &method.label()),
                active_sets,
                inference_data: None,
            })
        }
        Method::SingleTaskSi { scale } => {
            let spec = RandomizationSpec::new(*scale, rand_seed)?;
            let (intervals, active_sets) = single_task_si(
                dataset,
                &spec,
                lambda,
                &solver.lasso_config(),
                alpha,
                sigmas,
            )?;
            Ok(MethodRun {
                intervals,
                active_sets,
                inference_data: None,
            })
        }
        Method::DataSplit { fraction } => {
            let (intervals, active_sets, inference_data) = split_then_infer(
                dataset,
                *fraction,
                &solver.mtl_config(lambda),
                alpha,
                sigmas,
                rand_seed,
            )?;
            Ok(MethodRun {
                intervals,
                active_sets,
                inference_data: Some(inference_data),
            })
        }
        Method::Naive => {
            let spec = RandomizationSpec::new(0.0, 0)?;
            let outcome = run_mtl_selection(dataset, &spec, &solver.mtl_config(lambda))?;
            let active_sets: Vec<Vec<usize>> =
                outcome.tasks.iter().map(|t| t.active.clone()).collect();
            let intervals = naive_inference(dataset, &active_sets, alpha, sigmas)?;
            Ok(MethodRun {
                intervals,
                active_sets,
                inference_data: None,
            })
        }
    }
}

fn run_cell(
    cfg: &SimConfig,
    method: &Method,
    method_idx: usize,
    rep: usize,
    lambda_fixed: Option<f64>,
    grid: &[f64],
) -> Result<MetricsRecord> {
    let per_rep_tuning = lambda_fixed.is_none();
    let (beta, train, val, data_seed) = replication_inputs(cfg, STREAM_DATA, rep, per_rep_tuning)?;
    let rand_seed = seed::derive2(data_seed, STREAM_METHOD, method_idx as u64);
    let sigmas = vec![cfg.sigma; cfg.k];

    let (lambda, val_mse) = match lambda_fixed {
        Some(l) => (l, None),
        None => {
            let folds = vec![(train.clone(), val.clone().unwrap(), rand_seed)];
            let (best, path) = tune_lambda(method, &folds, grid, &cfg.solver)?;
            let at = grid.iter().position(|&g| g == best).unwrap_or(0);
            (best, Some(path[at]))
        }
    };

    let run = run_method(
        method,
        &train,
        lambda,
        &cfg.solver,
        cfg.alpha,
        &sigmas,
        rand_seed,
    )?;
    let target_data = run.inference_data.as_ref().unwrap_or(&train);
    let view = compute_metrics(&run.intervals, &beta, &run.active_sets, target_data)?;
    Ok(MetricsRecord {
        method: method.label(),
        replication: rep,
        lambda,
        coverage: view.coverage,
        mean_length: view.mean_length,
        n_selected: view.n_selected,
        n_significant: view.n_significant,
        precision: view.precision,
        recall: view.recall,
        f1: view.f1,
        snr: (0..cfg.k)
            .map(|t| snr(&beta.column(t).into_owned(), cfg.rho, cfg.n, cfg.sigma))
            .collect(),
        val_mse,
    })
}

/// Resolves each method's lambda ahead of the main replications (except in
/// per-replication tuning mode). Returns (per-method fixed lambda, grid,
/// tuning records).
type ResolvedLambdas = (Vec<Option<f64>>, Vec<f64>, Vec<TuningRecord>);

fn resolve_lambdas(cfg: &SimConfig, methods: &[Method]) -> Result<ResolvedLambdas> {
    match &cfg.lambda {
        LambdaRule::Fixed(l) => Ok((vec![Some(*l); methods.len()], Vec::new(), Vec::new())),
        LambdaRule::TunePerRep { grid } => {
            // Materialize against the first replication's data so every
            // replication shares one grid.
            let (_, train, _, _) = replication_inputs(cfg, STREAM_DATA, 0, false)?;
            let grid = grid.materialize(&train)?;
            Ok((vec![None; methods.len()], grid, Vec::new()))
        }
        LambdaRule::TuneAux { grid, aux_reps } => {
            if *aux_reps == 0 {
                return Err(Error::InvalidConfig {
                    message: "TuneAux needs at least one auxiliary replication".into(),
                });
            }
            let mut folds = Vec::with_capacity(*aux_reps);
            for r in 0..*aux_reps {
                let (_, train, val, data_seed) = replication_inputs(cfg, STREAM_AUX, r, true)?;
                folds.push((train, val.unwrap(), data_seed));
            }
            let grid = grid.materialize(&folds[0].0)?;
            let mut lambdas = Vec::with_capacity(methods.len());
            let mut tuning = Vec::with_capacity(methods.len());
            for (mi, method) in methods.iter().enumerate() {
                let method_folds: Vec<_> = folds
                    .iter()
                    .map(|(t, v, ds)| {
                        (
                            t.clone(),
                            v.clone(),
                            seed::derive2(*ds, STREAM_METHOD, mi as u64),
                        )
                    })
                    .collect();
                let (best, path) = tune_lambda(method, &method_folds, &grid, &cfg.solver)?;
                tuning.push(TuningRecord {
                    method: method.label(),
                    grid: grid.clone(),
                    mse: path,
                    selected: best,
                });
                lambdas.push(Some(best));
            }
            Ok((lambdas, grid, tuning))
        }
    }
}

fn collect_cells(
    cfg: &SimConfig,
    methods: &[Method],
    lambdas: &[Option<f64>],
    grid: &[f64],
    parallel: bool,
) -> (Vec<MetricsRecord>, Vec<FailureRecord>) {
    let cells: Vec<(usize, usize)> = (0..cfg.replications)
        .flat_map(|rep| (0..methods.len()).map(move |mi| (rep, mi)))
        .collect();
    let run_one = |&(rep, mi): &(usize, usize)| {
        run_cell(cfg, &methods[mi], mi, rep, lambdas[mi], grid).map_err(|e| FailureRecord {
            method: methods[mi].label(),
            replication: rep,
            error: e.to_string(),
        })
    };
    let results: Vec<std::result::Result<MetricsRecord, FailureRecord>> = if parallel {
        #[cfg(feature = "parallel")]
        {
            cells.par_iter().map(run_one).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            cells.iter().map(run_one).collect()
        }
    } else {
        cells.iter().map(run_one).collect()
    };
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(f) => failures.push(f),
        }
    }
    (records, failures)
}

fn run_experiment_impl(
    cfg: &SimConfig,
    methods: &[Method],
    parallel: bool,
) -> Result<ExperimentOutput> {
    cfg.validate()?;
    if methods.is_empty() {
        return Err(Error::InvalidConfig {
            message: "no methods given".into(),
        });
    }
    let (lambdas, grid, tuning) = resolve_lambdas(cfg, methods)?;
    let (records, failures) = collect_cells(cfg, methods, &lambdas, &grid, parallel);
    Ok(ExperimentOutput {
        records,
        tuning,
        failures,
    })
}

/// Runs the experiment, parallelizing replications when the `parallel`
/// feature is enabled.
pub fn run_experiment(cfg: &SimConfig, methods: &[Method]) -> Result<ExperimentOutput> {
    run_experiment_impl(cfg, methods, true)
}

/// Single-threaded runner; produces byte-identical output to
/// [`run_experiment`].
pub fn run_experiment_sequential(cfg: &SimConfig, methods: &[Method]) -> Result<ExperimentOutput> {
    run_experiment_impl(cfg, methods, false)
}

/// Serializes a float with 17 significant digits so reloading reproduces
/// the exact bit pattern.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Tidy CSV: one row per (replication, method).
pub fn metrics_to_csv(records: &[MetricsRecord], k: usize) -> String {
    let mut out = String::from(
        "method,replication,lambda,coverage,mean_length,n_selected,n_significant,precision,recall,f1,val_mse",
    );
    for t in 0..k {
        out.push_str(&format!(",snr_{t}"));
    }
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.method,
            r.replication,
            format_float(r.lambda),
            format_float(r.coverage),
            format_float(r.mean_length),
            r.n_selected,
            r.n_significant,
            format_float(r.precision),
            format_float(r.recall),
            format_float(r.f1),
            r.val_mse.map(format_float).unwrap_or_default(),
        ));
        for t in 0..k {
            out.push(',');
            out.push_str(&format_float(r.snr.get(t).copied().unwrap_or(f64::NAN)));
        }
        out.push('\n');
    }
    out
}

/// Tuning paths as CSV: one row per (method, grid value).
pub fn tuning_to_csv(tuning: &[TuningRecord]) -> String {
    let mut out = String::from("method,lambda,val_mse,selected\n");
    for t in tuning {
        for (l, m) in t.grid.iter().zip(&t.mse) {
            out.push_str(&format!(
                "{},{},{},{}\n",
                t.method,
                format_float(*l),
                format_float(*m),
                if *l == t.selected { 1 } else { 0 },
            ));
        }
    }
    out
}
