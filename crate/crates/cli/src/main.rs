//! Command-line entry points for multi-task selection and post-selection
//! inference.

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "mtsi",
    version,
    about = "Sparse multi-task model selection with valid post-selection confidence intervals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataFlags {
    /// Design CSV per task (repeat per task; header row, numeric cells).
    #[arg(long = "x", required = true)]
    x: Vec<PathBuf>,
    /// Response CSV per task (one column, no header).
    #[arg(long = "y", required = true)]
    y: Vec<PathBuf>,
    /// Known noise scales, comma-separated, one per task.
    #[arg(long, value_delimiter = ',')]
    sigma: Option<Vec<f64>>,
    /// Center and scale each response to unit sample variance.
    #[arg(long)]
    standardize_y: bool,
}

impl DataFlags {
    fn to_args(&self) -> commands::DataArgs {
        commands::DataArgs {
            x: self.x.clone(),
            y: self.y.clone(),
            sigma: self.sigma.clone(),
            standardize_y: self.standardize_y,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Jointly select a sparse model across tasks with the randomized
    /// reweighted LASSO.
    Select {
        #[command(flatten)]
        data: DataFlags,
        /// Penalty tuning parameter.
        #[arg(long)]
        lambda: f64,
        /// Weight cap (default 50 * lambda).
        #[arg(long)]
        lambda0: Option<f64>,
        /// Ridge epsilon as a fraction of the mean Gram diagonal.
        #[arg(long)]
        ridge: Option<f64>,
        /// Randomizer scale v (omega ~ N(0, v^2 sigma_k^2 I)).
        #[arg(long, default_value_t = 1.0)]
        rand_scale: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Confidence intervals for a saved selection outcome.
    Infer {
        #[command(flatten)]
        data: DataFlags,
        /// Selection outcome JSON written by `select`.
        #[arg(long)]
        outcome: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Pick lambda by validation MSE along a grid.
    Tune {
        #[command(flatten)]
        data: DataFlags,
        /// Method: mtl, lasso, ds, naive (bare names take --rand-scale /
        /// --split-frac), or the mtl:0.7 syntax.
        #[arg(long, default_value = "mtl")]
        method: String,
        #[arg(long)]
        rand_scale: Option<f64>,
        #[arg(long)]
        split_frac: Option<f64>,
        /// Fraction of samples held out for validation.
        #[arg(long, default_value_t = 0.2)]
        val_frac: f64,
        #[arg(long, default_value_t = 20)]
        grid_count: usize,
        #[arg(long, default_value_t = 0.05)]
        grid_lo: f64,
        #[arg(long, default_value_t = 2.0)]
        grid_hi: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Seeded Monte Carlo comparison of methods (coverage, length, F1).
    Simulate {
        /// Flat key = value configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the file's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the file's method list, e.g. "mtl:1.0,ds:0.5".
        #[arg(long)]
        method: Option<String>,
        /// Overrides the file's replication count.
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Jaccard similarity, coefficients of variation and back-projection
    /// from saved inference outputs.
    Report {
        /// Interval table CSV written by `infer`.
        #[arg(long)]
        intervals: PathBuf,
        /// Inference result JSON (enables cv.csv).
        #[arg(long)]
        result: Option<PathBuf>,
        /// Loading matrix CSV (p_original x p columns; enables
        /// backprojection.csv).
        #[arg(long)]
        loadings: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Select {
            data,
            lambda,
            lambda0,
            ridge,
            rand_scale,
            seed,
            out_dir,
        } => commands::select(
            &data.to_args(),
            lambda,
            lambda0,
            ridge,
            rand_scale,
            seed,
            &out_dir,
        ),
        Command::Infer {
            data,
            outcome,
            alpha,
            seed,
            out_dir,
        } => commands::infer(&data.to_args(), &outcome, alpha, seed, &out_dir),
        Command::Tune {
            data,
            method,
            rand_scale,
            split_frac,
            val_frac,
            grid_count,
            grid_lo,
            grid_hi,
            seed,
            out_dir,
        } => commands::tune(
            &data.to_args(),
            &method,
            rand_scale,
            split_frac,
            val_frac,
            (grid_count, grid_lo, grid_hi),
            seed,
            &out_dir,
        ),
        Command::Simulate {
            config,
            seed,
            method,
            reps,
            out_dir,
        } => commands::simulate(config.as_deref(), seed, method.as_deref(), reps, &out_dir),
        Command::Report {
            intervals,
            result,
            loadings,
            out_dir,
        } => commands::report(&intervals, result.as_deref(), loadings.as_deref(), &out_dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse(); // usage errors exit 2 via clap
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (kind, code) = match err.downcast_ref::<mtsi_core::Error>() {
                Some(core_err) if core_err.is_numerical() => ("numerical", 4u8),
                Some(_) => ("data", 3u8),
                None => ("data", 3u8),
            };
            let record = json!({
                "error": err.to_string(),
                "kind": kind,
            });
            eprintln!("{record}");
            ExitCode::from(code)
        }
    }
}
