//! Implementations of the five subcommands.

use std::path::{Path, PathBuf};

use anyhow::Context;
use mtsi_core::baselines::SplitPlan;
use mtsi_core::inference::{confidence_intervals, infer_mtl, plugin_sigma, InferenceResult};
use mtsi_core::mtl::{run_mtl_selection, MtlConfig};
use mtsi_core::report::{project_to_original, report_cv, report_jaccard, significant_sets};
use mtsi_core::sim::{
    format_float, metrics_to_csv, run_experiment, tune_lambda, tuning_to_csv, GridSpec, Method,
    SolverSettings, TuningRecord,
};
use mtsi_core::types::{MultiTaskDataset, RandomizationSpec, SelectionOutcome};
use mtsi_core::{seed, Error};
use nalgebra::DMatrix;
use serde_json::json;

use crate::config::{parse_methods, simulate_settings, FileConfig};
use crate::io;

pub struct DataArgs {
    pub x: Vec<PathBuf>,
    pub y: Vec<PathBuf>,
    pub sigma: Option<Vec<f64>>,
    pub standardize_y: bool,
}

impl DataArgs {
    fn load(&self) -> Result<MultiTaskDataset, Error> {
        if let Some(s) = &self.sigma {
            if s.len() != self.x.len() {
                return Err(Error::InvalidConfig {
                    message: format!(
                        "--sigma needs one value per task ({} given, {} tasks)",
                        s.len(),
                        self.x.len()
                    ),
                });
            }
        }
        io::load_multitask_csv(&self.x, &self.y, self.sigma.as_deref(), self.standardize_y)
    }

    fn input_paths(&self) -> Vec<PathBuf> {
        self.x.iter().chain(self.y.iter()).cloned().collect()
    }
}

fn solver_from_flags(ridge: Option<f64>) -> SolverSettings {
    SolverSettings {
        ridge_factor: ridge.unwrap_or(1e-4),
        ..SolverSettings::default()
    }
}

pub fn select(
    data: &DataArgs,
    lambda: f64,
    lambda0: Option<f64>,
    ridge: Option<f64>,
    rand_scale: f64,
    seed_value: u64,
    out_dir: &Path,
) -> anyhow::Result<()> {
    let dataset = data.load()?;
    let solver = solver_from_flags(ridge);
    let mut config = solver.mtl_config(lambda);
    if let Some(l0) = lambda0 {
        config = MtlConfig {
            lambda0: l0,
            ..config
        };
    }
    let spec = RandomizationSpec::new(rand_scale, seed_value)?;
    let outcome = run_mtl_selection(&dataset, &spec, &config)?;

    let manifest = io::RunManifest::new(
        "select",
        seed_value,
        json!({
            "lambda": lambda,
            "lambda0": config.lambda0,
            "ridge_factor": solver.ridge_factor,
            "rand_scale": rand_scale,
            "standardize_y": data.standardize_y,
            "tasks": dataset.k(),
            "p": dataset.p(),
        }),
    )
    .with_inputs(&data.input_paths())?;
    io::write_output(
        out_dir,
        "outcome.json",
        &serde_json::to_string_pretty(&outcome)?,
    )?;
    io::write_output(
        out_dir,
        "manifest.json",
        &serde_json::to_string_pretty(&manifest)?,
    )?;

    for (k, task) in outcome.tasks.iter().enumerate() {
        println!("task {k}: {} active of {}", task.q(), dataset.p());
    }
    println!(
        "wrote {} and manifest.json",
        out_path_join(out_dir, "outcome.json")
    );
    Ok(())
}

fn out_path_join(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

pub fn infer(
    data: &DataArgs,
    outcome_path: &Path,
    alpha: f64,
    seed_value: u64,
    out_dir: &Path,
) -> anyhow::Result<()> {
    let dataset = data.load()?;
    let text = io::read_file(outcome_path)?;
    let outcome: SelectionOutcome =
        serde_json::from_str(&text).with_context(|| format!("parsing {outcome_path:?}"))?;
    if outcome.p() != dataset.p() || outcome.k() != dataset.k() {
        return Err(Error::ShapeMismatch {
            message: format!(
                "outcome is for p={}, K={}, data has p={}, K={}",
                outcome.p(),
                outcome.k(),
                dataset.p(),
                dataset.k()
            ),
        }
        .into());
    }

    // Noise scales: known when supplied, plug-in on the selected model
    // otherwise.
    let sigmas: Vec<f64> = match &data.sigma {
        Some(s) => s.clone(),
        None => {
            let mut sigmas = Vec::with_capacity(dataset.k());
            for (k, task) in dataset.tasks().iter().enumerate() {
                let x_e = task.x.select_columns(outcome.tasks[k].active.iter());
                let sigma = plugin_sigma(&x_e, &task.y).map_err(|e| match e {
                    Error::DegreesOfFreedomExhausted { n, q, .. } => {
                        Error::DegreesOfFreedomExhausted { task: k, n, q }
                    }
                    other => other,
                })?;
                sigmas.push(sigma);
            }
            sigmas
        }
    };

    let result = infer_mtl(&dataset, &outcome, &sigmas)?;
    let intervals = confidence_intervals(&result, alpha, "MTL+SI");

    let manifest = io::RunManifest::new(
        "infer",
        seed_value,
        json!({
            "alpha": alpha,
            "sigmas": sigmas,
            "selected": outcome.total_active(),
        }),
    )
    .with_inputs(
        &data
            .input_paths()
            .into_iter()
            .chain([outcome_path.to_path_buf()])
            .collect::<Vec<_>>(),
    )?;
    io::write_output(out_dir, "intervals.csv", &io::intervals_to_csv(&intervals))?;
    io::write_output(
        out_dir,
        "inference.json",
        &serde_json::to_string_pretty(&result)?,
    )?;
    io::write_output(
        out_dir,
        "manifest.json",
        &serde_json::to_string_pretty(&manifest)?,
    )?;
    println!(
        "{} intervals written to {}",
        intervals.len(),
        out_path_join(out_dir, "intervals.csv")
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn tune(
    data: &DataArgs,
    method_raw: &str,
    rand_scale: Option<f64>,
    split_frac: Option<f64>,
    val_frac: f64,
    grid: (usize, f64, f64),
    seed_value: u64,
    out_dir: &Path,
) -> anyhow::Result<()> {
    let dataset = data.load()?;
    let method = resolve_method(method_raw, rand_scale, split_frac)?;
    if !(val_frac > 0.0 && val_frac < 1.0) {
        return Err(Error::InvalidConfig {
            message: format!("--val-frac must be in (0, 1), got {val_frac}"),
        }
        .into());
    }
    let plan = SplitPlan::draw(&dataset, 1.0 - val_frac, seed::derive(seed_value, 0x7e))?;
    let train = dataset.subset_rows(&plan.selection)?;
    let val = dataset.subset_rows(&plan.inference)?;
    let (count, lo, hi) = grid;
    let grid_values = GridSpec::Scaled {
        count,
        lo_frac: lo,
        hi_frac: hi,
    }
    .materialize(&train)?;
    let solver = SolverSettings::default();
    let folds = vec![(train, val, seed::derive(seed_value, 0x7f))];
    let (best, path) = tune_lambda(&method, &folds, &grid_values, &solver)?;

    let record = TuningRecord {
        method: method.label(),
        grid: grid_values,
        mse: path,
        selected: best,
    };
    let manifest = io::RunManifest::new(
        "tune",
        seed_value,
        json!({
            "method": method.label(),
            "val_frac": val_frac,
            "selected_lambda": best,
        }),
    )
    .with_inputs(&data.input_paths())?;
    io::write_output(out_dir, "lambda_path.csv", &tuning_to_csv(&[record]))?;
    io::write_output(
        out_dir,
        "manifest.json",
        &serde_json::to_string_pretty(&manifest)?,
    )?;
    println!("selected lambda = {}", format_float(best));
    Ok(())
}

fn resolve_method(
    raw: &str,
    rand_scale: Option<f64>,
    split_frac: Option<f64>,
) -> Result<Method, Error> {
    // Bare names pick their parameter up from the dedicated flags.
    let method = match raw {
        "mtl" => Method::MtlSi {
            scale: rand_scale.unwrap_or(1.0),
        },
        "lasso" => Method::SingleTaskSi {
            scale: rand_scale.unwrap_or(1.0),
        },
        "ds" => Method::DataSplit {
            fraction: split_frac.unwrap_or(0.5),
        },
        other => parse_methods(other)?[0],
    };
    Ok(method)
}

pub fn simulate(
    config_path: Option<&Path>,
    seed_override: Option<u64>,
    methods_override: Option<&str>,
    reps_override: Option<usize>,
    out_dir: &Path,
) -> anyhow::Result<()> {
    let file = match config_path {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let settings = simulate_settings(&file, seed_override, methods_override, reps_override)?;
    let output = run_experiment(&settings.config, &settings.methods)?;

    let metrics_csv = metrics_to_csv(&output.records, settings.config.k);
    io::write_output(out_dir, "metrics.csv", &metrics_csv)?;
    if !output.tuning.is_empty() {
        io::write_output(out_dir, "tuning.csv", &tuning_to_csv(&output.tuning))?;
    }
    if !output.failures.is_empty() {
        let mut failures = String::from("method,replication,error\n");
        for f in &output.failures {
            failures.push_str(&format!("{},{},{:?}\n", f.method, f.replication, f.error));
        }
        io::write_output(out_dir, "failures.csv", &failures)?;
    }
    let mut manifest = io::RunManifest::new(
        "simulate",
        settings.config.master_seed,
        json!({
            "config": settings.config,
            "methods": settings.methods.iter().map(Method::label).collect::<Vec<_>>(),
        }),
    );
    if let Some(p) = config_path {
        manifest = manifest.with_inputs(&[p.to_path_buf()])?;
    }
    io::write_output(
        out_dir,
        "manifest.json",
        &serde_json::to_string_pretty(&manifest)?,
    )?;

    // Per-method summary on stdout.
    for method in &settings.methods {
        let label = method.label();
        let rows: Vec<_> = output
            .records
            .iter()
            .filter(|r| r.method == label)
            .collect();
        if rows.is_empty() {
            println!("{label}: no successful replications");
            continue;
        }
        let mean = |f: &dyn Fn(&&mtsi_core::sim::MetricsRecord) -> f64| {
            rows.iter().map(f).sum::<f64>() / rows.len() as f64
        };
        println!(
            "{label}: reps={} coverage={:.3} length={:.3} f1={:.3}",
            rows.len(),
            mean(&|r| r.coverage),
            mean(&|r| r.mean_length),
            mean(&|r| r.f1),
        );
    }
    if !output.failures.is_empty() {
        println!(
            "{} replication(s) failed; see failures.csv",
            output.failures.len()
        );
    }
    Ok(())
}

pub fn report(
    intervals_path: &Path,
    result_path: Option<&Path>,
    loadings_path: Option<&Path>,
    out_dir: &Path,
) -> anyhow::Result<()> {
    let intervals = io::intervals_from_csv(&io::read_file(intervals_path)?)?;
    let k = intervals.iter().map(|r| r.task + 1).max().unwrap_or(0);
    let sets = significant_sets(&intervals, k);
    let jaccard = report_jaccard(&sets);
    io::write_output(out_dir, "jaccard.csv", &io::matrix_to_csv(&jaccard, "task"))?;

    let mut written = vec!["jaccard.csv".to_string()];
    if let Some(rp) = result_path {
        let result: InferenceResult =
            serde_json::from_str(&io::read_file(rp)?).with_context(|| format!("parsing {rp:?}"))?;
        let q = result.labels.len();
        if result.mle.len() != q || result.inv_info.nrows() != q || result.inv_info.ncols() != q {
            return Err(Error::ShapeMismatch {
                message: format!(
                    "{}: {} labels but {}-dimensional estimate/covariance",
                    rp.display(),
                    q,
                    result.mle.len()
                ),
            }
            .into());
        }
        let mut cv_csv = String::from("task,feature,estimate,stderr,cv\n");
        for (i, ((task, feature), cv)) in report_cv(&result).into_iter().enumerate() {
            cv_csv.push_str(&format!(
                "{},{},{},{},{}\n",
                task,
                feature,
                format_float(result.mle[i]),
                format_float(result.inv_info[(i, i)].sqrt()),
                if cv.is_finite() {
                    format_float(cv)
                } else {
                    "inf".to_string()
                },
            ));
        }
        io::write_output(out_dir, "cv.csv", &cv_csv)?;
        written.push("cv.csv".into());

        if let Some(lp) = loadings_path {
            let loadings = io::load_matrix_csv(lp)?;
            if let Some(&(_, max_feature)) =
                result.labels.iter().max_by_key(|&&(_, feature)| feature)
            {
                if max_feature >= loadings.ncols() {
                    return Err(Error::DimensionMismatch {
                        what: "loading columns",
                        expected: max_feature + 1,
                        got: loadings.ncols(),
                    }
                    .into());
                }
            }
            let p_orig = loadings.nrows();
            let mut back = DMatrix::zeros(p_orig, k);
            for task in 0..k {
                let coords: Vec<usize> = result
                    .labels
                    .iter()
                    .enumerate()
                    .filter(|(_, &(t, _))| t == task)
                    .map(|(i, _)| i)
                    .collect();
                if coords.is_empty() {
                    continue;
                }
                let features: Vec<usize> = coords.iter().map(|&i| result.labels[i].1).collect();
                let a_e = loadings.select_columns(features.iter());
                let theta = nalgebra::DVector::from_iterator(
                    coords.len(),
                    coords.iter().map(|&i| result.mle[i]),
                );
                let beta = project_to_original(&a_e, &theta)?;
                back.set_column(task, &beta);
            }
            io::write_output(
                out_dir,
                "backprojection.csv",
                &io::matrix_to_csv(&back, "task"),
            )?;
            written.push("backprojection.csv".into());
        }
    }
    let manifest = io::RunManifest::new("report", 0, json!({"outputs": written}))
        .with_inputs(&[intervals_path.to_path_buf()])?;
    io::write_output(
        out_dir,
        "manifest.json",
        &serde_json::to_string_pretty(&manifest)?,
    )?;
    println!("wrote {}", written.join(", "));
    Ok(())
}
