//! Per-run records, their on-disk formats, and cross-run summaries.
//!
//! Each run writes one CSV of per-iteration rows with the fixed header
//! `iteration,objective,wall_ms`; run metadata (final metric, status) goes
//! into a single `runs.json` next to them. `summarize` reduces a directory
//! of runs to per-optimizer mean/std tables and per-iteration mean/std
//! bands.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sca_core::engine::{LogRow, RunStatus};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum RecordError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed record file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("no records found")]
    NoRecords,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RecordError + '_ {
    move |source| RecordError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Everything produced by one (optimizer, repetition) run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub optimizer: String,
    pub seed_index: u64,
    /// Relative filename of the per-iteration CSV.
    pub rows_file: String,
    /// Test MSE (regression) or test AUC (binary), when the run finished.
    pub final_metric: Option<f64>,
    /// "completed", "diverged@N", or "failed: ...".
    pub status: String,
    #[serde(skip)]
    pub rows: Vec<LogRow>,
}

pub fn status_string(status: &RunStatus) -> String {
    match status {
        RunStatus::Completed => "completed".to_string(),
        RunStatus::Diverged { iteration } => format!("diverged@{iteration}"),
    }
}

/// Writes per-iteration rows with the exact header
/// `iteration,objective,wall_ms`; floats use the shortest round-trip form.
pub fn write_rows_csv(path: &Path, rows: &[LogRow]) -> Result<(), RecordError> {
    let mut out = String::from("iteration,objective,wall_ms\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            row.iteration, row.objective, row.wall_ms
        ));
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn read_rows_csv(path: &Path) -> Result<Vec<LogRow>, RecordError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("iteration,objective,wall_ms") => {}
        other => {
            return Err(RecordError::Malformed {
                path: path.to_path_buf(),
                reason: format!("unexpected header {other:?}"),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, ',');
        let parse = |s: Option<&str>| -> Result<f64, RecordError> {
            s.and_then(|v| v.parse().ok())
                .ok_or_else(|| RecordError::Malformed {
                    path: path.to_path_buf(),
                    reason: format!("bad row at line {}", i + 2),
                })
        };
        let iteration = parse(parts.next())? as usize;
        let objective = parse(parts.next())?;
        let wall_ms = parse(parts.next())?;
        rows.push(LogRow {
            iteration,
            objective,
            wall_ms,
        });
    }
    Ok(rows)
}

/// Persists a batch of records into `dir`: one rows CSV per record plus a
/// `runs.json` manifest.
pub fn write_records(dir: &Path, records: &[RunRecord]) -> Result<(), RecordError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for record in records {
        write_rows_csv(&dir.join(&record.rows_file), &record.rows)?;
    }
    let manifest = serde_json::to_string_pretty(records).expect("records serialize");
    let path = dir.join("runs.json");
    let mut f = fs::File::create(&path).map_err(io_err(&path))?;
    f.write_all(manifest.as_bytes()).map_err(io_err(&path))?;
    Ok(())
}

/// Loads a record directory written by [`write_records`].
pub fn read_records(dir: &Path) -> Result<Vec<RunRecord>, RecordError> {
    let path = dir.join("runs.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut records: Vec<RunRecord> =
        serde_json::from_str(&text).map_err(|e| RecordError::Malformed {
            path: path.clone(),
            reason: e.to_string(),
        })?;
    for record in &mut records {
        record.rows = read_rows_csv(&dir.join(&record.rows_file))?;
    }
    Ok(records)
}

/// Mean and sample standard deviation (n - 1); a single value has zero
/// spread by convention.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizerSummary {
    pub optimizer: String,
    pub runs: usize,
    pub failures: usize,
    pub metric_mean: f64,
    pub metric_std: f64,
    /// `(iteration, objective mean, objective std)` across runs.
    pub curve: Vec<(usize, f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub per_optimizer: Vec<OptimizerSummary>,
}

/// Aggregates records per optimizer: final-metric mean +- sample std and
/// the per-iteration objective band across completed runs.
pub fn summarize(records: &[RunRecord]) -> Result<Summary, RecordError> {
    if records.is_empty() {
        return Err(RecordError::NoRecords);
    }
    let mut by_optimizer: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for record in records {
        by_optimizer
            .entry(record.optimizer.as_str())
            .or_default()
            .push(record);
    }
    let mut per_optimizer = Vec::new();
    for (optimizer, group) in by_optimizer {
        let metrics: Vec<f64> = group.iter().filter_map(|r| r.final_metric).collect();
        let failures = group.iter().filter(|r| r.final_metric.is_none()).count();
        let (metric_mean, metric_std) = mean_std(&metrics);
        // band per logged iteration over runs that reached it
        let mut by_iteration: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for record in &group {
            for row in &record.rows {
                by_iteration.entry(row.iteration).or_default().push(row.objective);
            }
        }
        let curve = by_iteration
            .into_iter()
            .map(|(iteration, values)| {
                let (m, s) = mean_std(&values);
                (iteration, m, s)
            })
            .collect();
        per_optimizer.push(OptimizerSummary {
            optimizer: optimizer.to_string(),
            runs: group.len(),
            failures,
            metric_mean,
            metric_std,
            curve,
        });
    }
    Ok(Summary { per_optimizer })
}

/// Writes `summary.csv` plus one `curve_<optimizer>.csv` per optimizer.
pub fn write_summary(dir: &Path, summary: &Summary) -> Result<(), RecordError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut table = String::from("optimizer,runs,failures,metric_mean,metric_std\n");
    for s in &summary.per_optimizer {
        table.push_str(&format!(
            "{},{},{},{},{}\n",
            s.optimizer, s.runs, s.failures, s.metric_mean, s.metric_std
        ));
    }
    let path = dir.join("summary.csv");
    fs::write(&path, table).map_err(io_err(&path))?;
    for s in &summary.per_optimizer {
        let mut curve = String::from("iteration,objective_mean,objective_std\n");
        for (iteration, mean, std) in &s.curve {
            curve.push_str(&format!("{iteration},{mean},{std}\n"));
        }
        let path = dir.join(format!("curve_{}.csv", s.optimizer));
        fs::write(&path, curve).map_err(io_err(&path))?;
    }
    Ok(())
}
