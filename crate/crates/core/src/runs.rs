//! On-disk run layout and the train / resume loop.
//!
//! ```text
//! <run>/config.txt
//! <run>/manifest.json
//! <run>/metrics.csv
//! <run>/checkpoints/iter_000000/ ...
//! <run>/checkpoints/latest       name of the newest checkpoint
//! ```

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RunConfig;
use crate::metrics::{MetricsError, MetricsWriter};
use crate::trainer::{load_checkpoint, metrics_header, save_checkpoint, MetricsRow, TrainError, Trainer};

pub const CODE_VERSION: &str = concat!("locomimic ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

fn io_err(path: &Path, e: impl ToString) -> RunError {
    RunError::Io { path: path.display().to_string(), msg: e.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config_hash: String,
    pub seed: u64,
    /// Seconds since the Unix epoch.
    pub start_time: u64,
    pub code_version: String,
    pub status: RunStatus,
    pub iterations_completed: usize,
    /// Paths relative to the run directory.
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn read(run_dir: &Path) -> Result<Self, RunError> {
        let p = run_dir.join("manifest.json");
        let text = std::fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
        serde_json::from_str(&text).map_err(|e| io_err(&p, e))
    }

    pub fn write(&self, run_dir: &Path) -> Result<(), RunError> {
        let p = run_dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| io_err(&p, e))?;
        std::fs::write(&p, text).map_err(|e| io_err(&p, e))
    }

    pub fn add_artifact(&mut self, rel: &str) {
        if !self.artifacts.iter().any(|a| a == rel) {
            self.artifacts.push(rel.to_string());
        }
    }

    /// Artifacts listed in the manifest that are missing on disk.
    pub fn missing_artifacts(&self, run_dir: &Path) -> Vec<String> {
        self.artifacts.iter().filter(|a| !run_dir.join(a).exists()).cloned().collect()
    }
}

pub fn checkpoint_name(iteration: usize) -> String {
    format!("iter_{iteration:06}")
}

/// Path of the newest checkpoint of a run.
pub fn latest_checkpoint(run_dir: &Path) -> Result<PathBuf, RunError> {
    let p = run_dir.join("checkpoints").join("latest");
    let name = std::fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
    Ok(run_dir.join("checkpoints").join(name.trim()))
}

/// Progress callback: called after every iteration with the metrics row.
pub type Progress<'a> = &'a mut dyn FnMut(&MetricsRow);

struct RunLoop<'a> {
    dir: PathBuf,
    manifest: RunManifest,
    trainer: Trainer,
    metrics: MetricsWriter,
    progress: Progress<'a>,
}

impl RunLoop<'_> {
    fn checkpoint(&mut self) -> Result<(), RunError> {
        let name = checkpoint_name(self.trainer.iteration);
        let rel = format!("checkpoints/{name}");
        save_checkpoint(&self.trainer, &self.dir.join(&rel))?;
        let latest = self.dir.join("checkpoints/latest");
        std::fs::write(&latest, &name).map_err(|e| io_err(&latest, e))?;
        self.manifest.add_artifact(&rel);
        self.manifest.iterations_completed = self.trainer.iteration;
        self.manifest.write(&self.dir)
    }

    fn run(mut self) -> Result<RunManifest, RunError> {
        let total = self.trainer.cfg.train.iterations;
        let every = self.trainer.cfg.train.checkpoint_every.max(1);
        while self.trainer.iteration < total {
            let row = match self.trainer.iterate() {
                Ok(r) => r,
                Err(e) => {
                    self.manifest.status = RunStatus::Failed;
                    let _ = self.manifest.write(&self.dir);
                    return Err(e.into());
                }
            };
            self.metrics.write_row(&row)?;
            (self.progress)(&row);
            let it = self.trainer.iteration;
            if it.is_multiple_of(every) || it == total {
                self.checkpoint()?;
            }
        }
        self.manifest.iterations_completed = self.trainer.iteration;
        self.manifest.status = RunStatus::Complete;
        self.manifest.write(&self.dir)?;
        Ok(self.manifest)
    }
}

/// Starts a fresh run in `run_dir` (created if needed) and trains to the
/// configured budget. An initial checkpoint is always written.
pub fn train_run(cfg: RunConfig, run_dir: &Path, run_id: &str, progress: Progress) -> Result<RunManifest, RunError> {
    std::fs::create_dir_all(run_dir.join("checkpoints")).map_err(|e| io_err(run_dir, e))?;
    let cfg_path = run_dir.join("config.txt");
    std::fs::write(&cfg_path, cfg.canonical_text()).map_err(|e| io_err(&cfg_path, e))?;
    let manifest = RunManifest {
        run_id: run_id.to_string(),
        config_hash: cfg.hash(),
        seed: cfg.train.seed,
        start_time: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        code_version: CODE_VERSION.to_string(),
        status: RunStatus::Running,
        iterations_completed: 0,
        artifacts: vec!["config.txt".into(), "metrics.csv".into()],
    };
    let metrics = MetricsWriter::create(&run_dir.join("metrics.csv"), Some(metrics_header()))?;
    let trainer = Trainer::new(cfg)?;
    let mut lp = RunLoop { dir: run_dir.to_path_buf(), manifest, trainer, metrics, progress };
    lp.checkpoint()?;
    lp.run()
}

/// Continues a run from its newest checkpoint. Metrics rows past the
/// checkpoint are discarded first, so the file matches an uninterrupted run.
pub fn resume_run(run_dir: &Path, progress: Progress) -> Result<RunManifest, RunError> {
    let mut manifest = RunManifest::read(run_dir)?;
    let ck = latest_checkpoint(run_dir)?;
    let trainer = load_checkpoint(&ck)?;
    if trainer.cfg.hash() != manifest.config_hash {
        return Err(io_err(&ck, "checkpoint config differs from the run manifest"));
    }
    let mpath = run_dir.join("metrics.csv");
    MetricsWriter::truncate_rows(&mpath, trainer.iteration)?;
    let metrics = MetricsWriter::append(&mpath)?;
    manifest.status = RunStatus::Running;
    RunLoop { dir: run_dir.to_path_buf(), manifest, trainer, metrics, progress }.run()
}
