//! Flat key = value configuration files. Unknown keys are rejected; CLI
//! flags override file values.
//!
//! Recognized keys (all optional, shown with defaults):
//!
//! ```text
//! # experiment shape
//! n = 200            # samples per task
//! p = 50             # shared feature count
//! k = 3              # number of tasks
//! rho = 0.3          # design equicorrelation
//! s_global = 0.9     # fraction of globally null predictors
//! s_task = 0.2       # per-row fraction of task-level zeros
//! sigma = 1.0        # noise scale (known in simulations)
//! alpha = 0.1        # interval level
//! replications = 100
//! seed = 0
//!
//! # methods: comma list of mtl:<v>, lasso:<v>, ds:<s>, naive
//! methods = mtl:1.0,ds:0.5
//!
//! # tuning: lambda = <number> for a fixed value, or "tune-aux" /
//! # "tune-per-rep" with the grid below
//! lambda = tune-aux
//! aux_reps = 5
//! grid_count = 8
//! grid_lo = 0.1
//! grid_hi = 1.0
//!
//! # solver
//! ridge_factor = 1e-4
//! lasso_tol = 1e-10
//! lasso_max_iter = 20000
//! outer_tol = 1e-6
//! max_outer = 100
//! lambda0_factor = 50
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use mtsi_core::sim::{GridSpec, LambdaRule, Method, SimConfig, SolverSettings};
use mtsi_core::Error;

#[derive(Debug, Clone, Default)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, Error> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::InvalidConfig {
                message: format!("line {}: expected key = value, got {raw:?}", i + 1),
            })?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|_| Error::MissingFile {
            path: path.display().to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, Error> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::InvalidConfig {
                    message: format!("key {key}: cannot parse {raw:?}"),
                }),
        }
    }

    /// Rejects keys this tool does not understand, to catch typos early.
    pub fn check_known_keys(&self) -> Result<(), Error> {
        const KNOWN: &[&str] = &[
            "n",
            "p",
            "k",
            "rho",
            "s_global",
            "s_task",
            "sigma",
            "alpha",
            "replications",
            "seed",
            "methods",
            "lambda",
            "aux_reps",
            "grid_count",
            "grid_lo",
            "grid_hi",
            "ridge_factor",
            "lasso_tol",
            "lasso_max_iter",
            "outer_tol",
            "max_outer",
            "lambda0_factor",
        ];
        for key in self.values.keys() {
            if !KNOWN.contains(&key.as_str()) {
                return Err(Error::InvalidConfig {
                    message: format!("unknown configuration key {key:?}"),
                });
            }
        }
        Ok(())
    }
}

/// Parses `mtl:1.0,ds:0.5,lasso:0.7,naive`.
pub fn parse_methods(raw: &str) -> Result<Vec<Method>, Error> {
    let mut methods = Vec::new();
    for item in raw.split(',') {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        let (name, arg) = match item.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (item, None),
        };
        let parse_arg = |what: &str| -> Result<f64, Error> {
            arg.ok_or_else(|| Error::InvalidConfig {
                message: format!("method {name} needs {what}, e.g. {name}:0.5"),
            })?
            .parse::<f64>()
            .map_err(|_| Error::InvalidConfig {
                message: format!("method {item:?}: bad numeric argument"),
            })
        };
        methods.push(match name {
            "mtl" => Method::MtlSi {
                scale: parse_arg("a randomizer scale")?,
            },
            "lasso" => Method::SingleTaskSi {
                scale: parse_arg("a randomizer scale")?,
            },
            "ds" => Method::DataSplit {
                fraction: parse_arg("a split fraction")?,
            },
            "naive" => Method::Naive,
            other => {
                return Err(Error::InvalidConfig {
                    message: format!("unknown method {other:?}"),
                })
            }
        });
    }
    if methods.is_empty() {
        return Err(Error::InvalidConfig {
            message: "no methods specified".into(),
        });
    }
    Ok(methods)
}

pub struct SimulateSettings {
    pub config: SimConfig,
    pub methods: Vec<Method>,
}

/// Builds the simulation settings from a config file plus flag overrides.
pub fn simulate_settings(
    file: &FileConfig,
    seed_override: Option<u64>,
    methods_override: Option<&str>,
    reps_override: Option<usize>,
) -> Result<SimulateSettings, Error> {
    file.check_known_keys()?;
    let solver = SolverSettings {
        ridge_factor: file.parsed("ridge_factor")?.unwrap_or(1e-4),
        lasso_tol: file.parsed("lasso_tol")?.unwrap_or(1e-10),
        lasso_max_iter: file.parsed("lasso_max_iter")?.unwrap_or(20_000),
        outer_tol: file.parsed("outer_tol")?.unwrap_or(1e-6),
        max_outer: file.parsed("max_outer")?.unwrap_or(100),
        lambda0_factor: file.parsed("lambda0_factor")?.unwrap_or(50.0),
    };
    let grid = GridSpec::Scaled {
        count: file.parsed("grid_count")?.unwrap_or(8),
        lo_frac: file.parsed("grid_lo")?.unwrap_or(0.1),
        hi_frac: file.parsed("grid_hi")?.unwrap_or(1.0),
    };
    let lambda = match file.get("lambda") {
        None | Some("tune-aux") => LambdaRule::TuneAux {
            grid,
            aux_reps: file.parsed("aux_reps")?.unwrap_or(5),
        },
        Some("tune-per-rep") => LambdaRule::TunePerRep { grid },
        Some(raw) => LambdaRule::Fixed(raw.parse::<f64>().map_err(|_| Error::InvalidConfig {
            message: format!("lambda: expected a number, tune-aux or tune-per-rep, got {raw:?}"),
        })?),
    };
    let config = SimConfig {
        n: file.parsed("n")?.unwrap_or(200),
        p: file.parsed("p")?.unwrap_or(50),
        k: file.parsed("k")?.unwrap_or(3),
        rho: file.parsed("rho")?.unwrap_or(0.3),
        s_global: file.parsed("s_global")?.unwrap_or(0.9),
        s_task: file.parsed("s_task")?.unwrap_or(0.2),
        sigma: file.parsed("sigma")?.unwrap_or(1.0),
        alpha: file.parsed("alpha")?.unwrap_or(0.1),
        replications: reps_override
            .or(file.parsed("replications")?)
            .unwrap_or(100),
        master_seed: seed_override.or(file.parsed("seed")?).unwrap_or(0),
        lambda,
        solver,
    };
    config.validate()?;
    let methods = match methods_override {
        Some(raw) => parse_methods(raw)?,
        None => parse_methods(file.get("methods").unwrap_or("mtl:1.0,ds:0.5"))?,
    };
    Ok(SimulateSettings { config, methods })
}
