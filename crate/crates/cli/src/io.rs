//! File ingestion and persistence: CSV matrices, interval tables, run
//! manifests.

use std::fs;
use std::path::{Path, PathBuf};

use mtsi_core::inference::IntervalRecord;
use mtsi_core::sim::format_float;
use mtsi_core::types::{MultiTaskDataset, TaskData};
use mtsi_core::Error;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub fn read_file(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|_| Error::MissingFile {
        path: path.display().to_string(),
    })
}

/// Parses a numeric CSV with a header row into a matrix.
pub fn load_matrix_csv(path: &Path) -> Result<DMatrix<f64>, Error> {
    let text = read_file(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::ShapeMismatch {
        message: format!("{}: empty file", path.display()),
    })?;
    let p = header.split(',').count();
    let mut rows: Vec<f64> = Vec::new();
    let mut n = 0;
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != p {
            return Err(Error::ShapeMismatch {
                message: format!(
                    "{}: row {} has {} cells, header has {p}",
                    path.display(),
                    i + 2,
                    cells.len()
                ),
            });
        }
        for (j, cell) in cells.iter().enumerate() {
            let v = cell
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::NonNumericCell {
                    path: path.display().to_string(),
                    row: i + 2,
                    column: j + 1,
                })?;
            rows.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::ShapeMismatch {
            message: format!("{}: no data rows below the header", path.display()),
        });
    }
    Ok(DMatrix::from_row_slice(n, p, &rows))
}

/// Parses a single-column response file (no header).
pub fn load_vector_csv(path: &Path) -> Result<DVector<f64>, Error> {
    let text = read_file(path)?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v = line
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::NonNumericCell {
                path: path.display().to_string(),
                row: i + 1,
                column: 1,
            })?;
        values.push(v);
    }
    if values.is_empty() {
        return Err(Error::ShapeMismatch {
            message: format!("{}: empty response file", path.display()),
        });
    }
    Ok(DVector::from_vec(values))
}

/// Loads per-task (X, y) CSV pairs into a dataset, centering the design
/// columns and optionally standardizing each response to unit sample
/// variance.
pub fn load_multitask_csv(
    x_paths: &[PathBuf],
    y_paths: &[PathBuf],
    sigmas: Option<&[f64]>,
    standardize_y: bool,
) -> Result<MultiTaskDataset, Error> {
    if x_paths.len() != y_paths.len() || x_paths.is_empty() {
        return Err(Error::ShapeMismatch {
            message: format!(
                "need matching X/y file lists, got {} and {}",
                x_paths.len(),
                y_paths.len()
            ),
        });
    }
    let mut tasks = Vec::with_capacity(x_paths.len());
    for (k, (xp, yp)) in x_paths.iter().zip(y_paths).enumerate() {
        let x = load_matrix_csv(xp)?;
        let mut y = load_vector_csv(yp)?;
        if y.len() != x.nrows() {
            return Err(Error::ShapeMismatch {
                message: format!("task {k}: X has {} rows, y has {}", x.nrows(), y.len()),
            });
        }
        if standardize_y {
            let n = y.len() as f64;
            let mean = y.sum() / n;
            y.add_scalar_mut(-mean);
            let sd = (y.norm_squared() / (n - 1.0).max(1.0)).sqrt();
            if sd > 0.0 {
                y /= sd;
            }
        }
        tasks.push(TaskData {
            x,
            y,
            sigma: sigmas.map(|s| s[k]),
        });
    }
    MultiTaskDataset::new_centering(tasks)
}

/// Writes an interval table; floats carry 17 significant digits so a
/// reload is exact.
pub fn intervals_to_csv(records: &[IntervalRecord]) -> String {
    let mut out = String::from("task,feature,estimate,lower,upper,stderr,method,alpha\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.task,
            r.feature,
            format_float(r.estimate),
            format_float(r.lower),
            format_float(r.upper),
            format_float(r.stderr),
            r.method,
            format_float(r.alpha),
        ));
    }
    out
}

pub fn intervals_from_csv(text: &str) -> Result<Vec<IntervalRecord>, Error> {
    let mut lines = text.lines();
    let _header = lines.next();
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let c: Vec<&str> = line.split(',').collect();
        if c.len() != 8 {
            return Err(Error::ShapeMismatch {
                message: format!("interval row {} has {} cells, expected 8", i + 2, c.len()),
            });
        }
        let parse = |s: &str, col: usize| {
            s.trim().parse::<f64>().map_err(|_| Error::NonNumericCell {
                path: "intervals".into(),
                row: i + 2,
                column: col,
            })
        };
        records.push(IntervalRecord {
            task: c[0].trim().parse().map_err(|_| Error::NonNumericCell {
                path: "intervals".into(),
                row: i + 2,
                column: 1,
            })?,
            feature: c[1].trim().parse().map_err(|_| Error::NonNumericCell {
                path: "intervals".into(),
                row: i + 2,
                column: 2,
            })?,
            estimate: parse(c[2], 3)?,
            lower: parse(c[3], 4)?,
            upper: parse(c[4], 5)?,
            stderr: parse(c[5], 6)?,
            method: c[6].trim().to_string(),
            alpha: parse(c[7], 8)?,
        });
    }
    Ok(records)
}

/// Writes a plain numeric matrix with a generated header.
pub fn matrix_to_csv(m: &DMatrix<f64>, prefix: &str) -> String {
    let mut out = String::new();
    for j in 0..m.ncols() {
        if j > 0 {
            out.push(',');
        }
        out.push_str(&format!("{prefix}{j}"));
    }
    out.push('\n');
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format_float(m[(i, j)]));
        }
        out.push('\n');
    }
    out
}

/// FNV-1a content digest for the manifest.
pub fn digest_file(path: &Path) -> Result<String, Error> {
    let bytes = fs::read(path).map_err(|_| Error::MissingFile {
        path: path.display().to_string(),
    })?;
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    Ok(format!("fnv1a:{hash:016x}"))
}

/// Everything needed to re-execute a run bit-identically.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// Fully resolved configuration, serialized as JSON.
    pub config: serde_json::Value,
    pub input_digests: Vec<(String, String)>,
    pub unix_time: u64,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            input_digests: Vec::new(),
            unix_time: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn with_inputs(mut self, paths: &[PathBuf]) -> Result<Self, Error> {
        for p in paths {
            self.input_digests
                .push((p.display().to_string(), digest_file(p)?));
        }
        Ok(self)
    }
}

pub fn write_output(dir: &Path, name: &str, contents: &str) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}
