//! Elementwise comparison of emitted artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiffError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("shape mismatch in {file}: {detail}")]
    ShapeMismatch { file: String, detail: String },
    #[error("{0} is present in one directory only")]
    Unpaired(String),
}

/// Numeric cells of a CSV file, row by row. Rows whose first cell is not a
/// number (headers) are skipped.
pub fn read_csv(path: &Path) -> Result<Vec<Vec<f64>>, DiffError> {
    let err = |message: String| DiffError::Read {
        path: path.display().to_string(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| err(e.to_string()))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| err(e.to_string()))?;
        if record
            .get(0)
            .is_none_or(|c| c.trim().parse::<f64>().is_err())
        {
            continue;
        }
        let row = record
            .iter()
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|e| err(format!("{c:?}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn collect_numbers(v: &serde_json::Value, out: &mut Vec<f64>) {
    match v {
        serde_json::Value::Number(n) => out.extend(n.as_f64()),
        serde_json::Value::Array(items) => items.iter().for_each(|i| collect_numbers(i, out)),
        serde_json::Value::Object(map) => map.values().for_each(|i| collect_numbers(i, out)),
        _ => {}
    }
}

/// All numbers of a JSON document in document order, as a single row.
pub fn read_json(path: &Path) -> Result<Vec<Vec<f64>>, DiffError> {
    let err = |message: String| DiffError::Read {
        path: path.display().to_string(),
        message,
    };
    let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
    let mut out = Vec::new();
    collect_numbers(&value, &mut out);
    Ok(vec![out])
}

fn read_table(path: &Path) -> Result<Vec<Vec<f64>>, DiffError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => read_json(path),
        _ => read_csv(path),
    }
}

/// Max-abs elementwise difference between two artifact files.
pub fn diff_files(a: &Path, b: &Path) -> Result<f64, DiffError> {
    let ta = read_table(a)?;
    let tb = read_table(b)?;
    let file = a.display().to_string();
    if ta.len() != tb.len() {
        return Err(DiffError::ShapeMismatch {
            file,
            detail: format!("{} rows vs {} rows", ta.len(), tb.len()),
        });
    }
    let mut max = 0.0_f64;
    for (i, (ra, rb)) in ta.iter().zip(&tb).enumerate() {
        if ra.len() != rb.len() {
            return Err(DiffError::ShapeMismatch {
                file,
                detail: format!("row {}: {} columns vs {}", i + 1, ra.len(), rb.len()),
            });
        }
        for (x, y) in ra.iter().zip(rb) {
            let d = if x == y { 0.0 } else { (x - y).abs() };
            max = if d.is_nan() {
                f64::INFINITY
            } else {
                max.max(d)
            };
        }
    }
    Ok(max)
}

#[derive(Debug, Clone)]
pub struct FileDiff {
    pub name: String,
    pub max_abs: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct DiffReport {
    pub tol: f64,
    pub files: Vec<FileDiff>,
}

impl DiffReport {
    pub fn passed(&self) -> bool {
        self.files.iter().all(|f| f.passed)
    }

    pub fn max_abs(&self) -> f64 {
        self.files.iter().map(|f| f.max_abs).fold(0.0, f64::max)
    }
}

/// Files compared in directory mode: every CSV and JSON artifact except the
/// wall-clock timing record.
fn artifact_names(dir: &Path) -> Result<Vec<String>, DiffError> {
    let entries = fs::read_dir(dir).map_err(|e| DiffError::Read {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| (n.ends_with(".csv") || n.ends_with(".json")) && n != "timing.json")
        .collect();
    names.sort();
    Ok(names)
}

/// Compares two files, or every artifact of two result directories.
pub fn diff_artifacts(a: &Path, b: &Path, tol: f64) -> Result<DiffReport, DiffError> {
    let pairs: Vec<(String, PathBuf, PathBuf)> = if a.is_dir() && b.is_dir() {
        let na = artifact_names(a)?;
        let nb = artifact_names(b)?;
        if let Some(n) = na
            .iter()
            .find(|n| !nb.contains(n))
            .or(nb.iter().find(|n| !na.contains(n)))
        {
            return Err(DiffError::Unpaired(n.clone()));
        }
        na.into_iter()
            .map(|n| (n.clone(), a.join(&n), b.join(&n)))
            .collect()
    } else {
        vec![(a.display().to_string(), a.to_path_buf(), b.to_path_buf())]
    };
    let files = pairs
        .into_iter()
        .map(|(name, pa, pb)| {
            let max_abs = diff_files(&pa, &pb)?;
            Ok(FileDiff {
                name,
                max_abs,
                passed: max_abs <= tol,
            })
        })
        .collect::<Result<Vec<_>, DiffError>>()?;
    Ok(DiffReport { tol, files })
}
