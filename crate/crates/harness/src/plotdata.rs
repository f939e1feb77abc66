//! Long-format objective series from trace files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use ddzo_core::IterTrace;

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotRow {
    /// Trace file stem, e.g. `alg1-mini_seed3`.
    pub series: String,
    pub method: String,
    pub k: usize,
    pub cumulative_draws: u64,
    pub obj: f64,
}

pub fn read_trace(path: &Path) -> Result<Vec<IterTrace>, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(HarnessError::from))
        .collect()
}

/// Expands directories into their `.jsonl` files, sorted by name.
pub fn collect_trace_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, HarnessError> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let entries = fs::read_dir(input).map_err(|source| HarnessError::Io {
                path: input.clone(),
                source,
            })?;
            let mut found: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    Ok(files)
}

pub fn plot_rows(files: &[PathBuf]) -> Result<Vec<PlotRow>, HarnessError> {
    if files.is_empty() {
        return Err(HarnessError::Plot("no trace files given".into()));
    }
    let mut rows = Vec::new();
    for path in files {
        let series = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let method = series
            .rsplit_once("_seed")
            .map(|(m, _)| m.to_string())
            .unwrap_or_else(|| series.clone());
        for t in read_trace(path)? {
            if let Some(obj) = t.obj_probe {
                rows.push(PlotRow {
                    series: series.clone(),
                    method: method.clone(),
                    k: t.k,
                    cumulative_draws: t.cumulative_draws,
                    obj,
                });
            }
        }
    }
    if rows.is_empty() {
        return Err(HarnessError::Plot(
            "traces carry no objective probes; rerun with run.metric_every > 0".into(),
        ));
    }
    Ok(rows)
}

pub fn write_plot_csv<W: Write>(out: W, rows: &[PlotRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| HarnessError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| HarnessError::Csv(e.to_string()))
}
