//! Evaluation suites: DTW against reference clips, command-tracking sweeps,
//! style-reward statistics and the ablation table.

mod ablation;
mod dtw;
mod rollout;
mod style;
mod tracking;

pub use ablation::{
    ablation_table, median, ordering_holds, read_ablation_csv, windowed_return, write_ablation_csv, write_cells_csv, AblationCell,
    AblationRow,
};
pub use dtw::{dtw, DtwResult};
pub use rollout::{dtw_eval, him_probe, mean_dtw, write_dtw_csv, DtwRow, HimProbeReport, LogisticProbe, ProbeSample};
pub use style::{style_histogram, StyleSummary};
pub use tracking::{
    mean_abs_error, tracking_sweep, SegmentError, TrackingReport, TrackingSample, TrackingSchedule, TrackingSubject, WalkerSubject,
    CLIP_RANGE,
};

use std::path::Path;

use thiserror::Error;

use crate::metrics::MetricsError;
use crate::sim::SimError;
use crate::trainer::TrainError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {msg}")]
    Csv { path: String, msg: String },
}

fn csv_err(path: &Path, e: impl ToString) -> EvalError {
    EvalError::Csv { path: path.display().to_string(), msg: e.to_string() }
}
