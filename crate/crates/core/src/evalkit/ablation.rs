use std::path::Path;

use super::{csv_err, EvalError};
use crate::metrics::MetricsTable;

/// Mean of `task_return` over the last `window` rows. The flag is set when
/// the run is shorter than the window and the window was clamped.
pub fn windowed_return(table: &MetricsTable, window: usize) -> Result<(f64, bool), EvalError> {
    let r = table.column("task_return")?;
    if r.is_empty() || window == 0 {
        return Err(EvalError::Input("empty return window".into()));
    }
    let clamped = window > r.len();
    if clamped {
        log::warn!("return window {window} exceeds run length {}; clamped", r.len());
    }
    let tail = &r[r.len().saturating_sub(window)..];
    Ok((tail.iter().sum::<f64>() / tail.len() as f64, clamped))
}

/// One arm x seed result.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationCell {
    pub arm: String,
    pub seed: u64,
    /// None if the run is missing or failed.
    pub mean_return: Option<f64>,
    pub iterations: usize,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub arm: String,
    pub seeds: usize,
    pub mean: f64,
    /// Population standard deviation across seeds.
    pub std: f64,
    pub median: f64,
    pub complete: bool,
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Groups cells by arm, in first-appearance order.
pub fn ablation_table(cells: &[AblationCell]) -> Vec<AblationRow> {
    let mut arms: Vec<&str> = Vec::new();
    for c in cells {
        if !arms.contains(&c.arm.as_str()) {
            arms.push(&c.arm);
        }
    }
    arms.into_iter()
        .map(|arm| {
            let mine: Vec<&AblationCell> = cells.iter().filter(|c| c.arm == arm).collect();
            let vals: Vec<f64> = mine.iter().filter_map(|c| c.mean_return).collect();
            let n = vals.len() as f64;
            let mean = if vals.is_empty() { f64::NAN } else { vals.iter().sum::<f64>() / n };
            let var = if vals.is_empty() { f64::NAN } else { vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n };
            AblationRow {
                arm: arm.to_string(),
                seeds: vals.len(),
                mean,
                std: var.sqrt(),
                median: median(&vals),
                complete: mine.iter().all(|c| c.complete && c.mean_return.is_some()),
            }
        })
        .collect()
}

/// `median(better) >= median(worse)`; None if either arm is absent.
pub fn ordering_holds(rows: &[AblationRow], better: &str, worse: &str) -> Option<bool> {
    let b = rows.iter().find(|r| r.arm == better)?;
    let w = rows.iter().find(|r| r.arm == worse)?;
    Some(b.median >= w.median)
}

pub fn write_ablation_csv(path: &Path, rows: &[AblationRow]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["arm", "seeds", "mean_return", "std_return", "median_return", "complete"])
        .map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([
            r.arm.clone(),
            r.seeds.to_string(),
            format!("{:.16e}", r.mean),
            format!("{:.16e}", r.std),
            format!("{:.16e}", r.median),
            u8::from(r.complete).to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| csv_err(path, e))
}

pub fn read_ablation_csv(path: &Path) -> Result<Vec<AblationRow>, EvalError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let bad = || EvalError::Input(format!("{}: malformed row", path.display()));
        let f = |i: usize| rec.get(i).and_then(|s| s.parse::<f64>().ok()).ok_or_else(bad);
        rows.push(AblationRow {
            arm: rec.get(0).ok_or_else(bad)?.to_string(),
            seeds: f(1)? as usize,
            mean: f(2)?,
            std: f(3)?,
            median: f(4)?,
            complete: f(5)? != 0.0,
        });
    }
    Ok(rows)
}

/// Per-cell results next to the aggregated table.
pub fn write_cells_csv(path: &Path, cells: &[AblationCell]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["arm", "seed", "mean_return", "iterations", "complete"])
        .map_err(|e| csv_err(path, e))?;
    for c in cells {
        w.write_record([
            c.arm.clone(),
            c.seed.to_string(),
            c.mean_return.map_or("nan".to_string(), |v| format!("{v:.16e}")),
            c.iterations.to_string(),
            u8::from(c.complete).to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| csv_err(path, e))
}
