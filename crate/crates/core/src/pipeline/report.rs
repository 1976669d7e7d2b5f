use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::run::MetricRow;
use crate::error::{Error, Result};

/// Aggregate of the max-weight hypothesis quality for one method and step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub t: usize,
    /// Number of runs contributing.
    pub runs: usize,
    pub mean_q: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std_q: f64,
    pub mean_best_q: f64,
}

/// Every `metrics.csv` below `root`, in sorted path order.
pub fn find_metrics(root: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let Ok(entries) = std::fs::read_dir(&dir) else { continue };
        for e in entries {
            let path = e?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == "metrics.csv") {
                found.push(path);
            }
        }
    }
    found.sort();
    Ok(found)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Mean and standard deviation across runs of the per-run max-weight
/// hypothesis quality, for each (method, t).
pub fn aggregate(rows: &[MetricRow]) -> Vec<SummaryRow> {
    // (method, t) -> run key -> (max-weight q, best q)
    let mut per_run: BTreeMap<(String, usize), BTreeMap<(String, u64), (f64, f64, f64)>> = BTreeMap::new();
    for r in rows {
        let slot = per_run
            .entry((r.method.clone(), r.t))
            .or_default()
            .entry((r.run_id.clone(), r.seed))
            .or_insert((f64::NEG_INFINITY, f64::NAN, f64::NEG_INFINITY));
        if r.weight > slot.0 {
            slot.0 = r.weight;
            slot.1 = r.q;
        }
        slot.2 = slot.2.max(r.q);
    }
    per_run
        .into_iter()
        .map(|((method, t), runs)| {
            let qs: Vec<f64> = runs.values().map(|v| v.1).collect();
            let n = qs.len() as f64;
            let mean = qs.iter().sum::<f64>() / n;
            let std = if qs.len() > 1 {
                (qs.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                method,
                t,
                runs: qs.len(),
                mean_q: mean,
                std_q: std,
                mean_best_q: runs.values().map(|v| v.2).sum::<f64>() / n,
            }
        })
        .collect()
}

/// Aggregate every run below `root`.
pub fn export_report(root: &Path) -> Result<Vec<SummaryRow>> {
    let files = find_metrics(root)?;
    let mut rows = Vec::new();
    for f in &files {
        rows.extend(read_metrics(f)?);
    }
    if rows.is_empty() {
        return Err(Error::NoRuns(root.to_path_buf()));
    }
    Ok(aggregate(&rows))
}

/// Tab-separated table with a header line, one row per (method, t).
pub fn format_table(rows: &[SummaryRow]) -> String {
    let mut s = String::from("method\tt\truns\tmean_q\tstd_q\tmean_best_q\n");
    for r in rows {
        s.push_str(&format!(
            "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\n",
            r.method, r.t, r.runs, r.mean_q, r.std_q, r.mean_best_q
        ));
    }
    s
}
