use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use locomimic::config::RunConfig;
use locomimic::evalkit::{
    ablation_table, dtw_eval, him_probe, mean_dtw, ordering_holds, style_histogram, tracking_sweep, windowed_return, write_ablation_csv,
    write_cells_csv, write_dtw_csv, AblationCell, TrackingSchedule, WalkerSubject,
};
use locomimic::metrics::MetricsTable;
use locomimic::motion::{save_clip, MotionDataset};
use locomimic::runs::{latest_checkpoint, resume_run, train_run, RunManifest, RunStatus};
use locomimic::trainer::{MetricsRow, PolicyBundle};

mod presets;

/// Adversarial motion imitation on a planar biped.
#[derive(Parser)]
#[command(name = "locomimic", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one run under $LOCOMIMIC_RUNS (default ./runs).
    Train {
        /// Config file; a preset name (amp, amp_him, ampw_him, ampw_him_plus, desk) also works.
        #[arg(long)]
        config: Option<String>,
        /// Override, `section.key=value`. Repeatable; applied after the file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        run_id: Option<String>,
        /// Continue an existing run id from its newest checkpoint.
        #[arg(long, conflicts_with_all = ["config", "overrides", "seed"])]
        resume: Option<String>,
    },
    /// Evaluate a checkpoint. Results go to <run>/eval/.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = 1_000_000)]
        seed: u64,
        /// Iteration window for the style suite, counted back from the last row.
        #[arg(long, default_value_t = 500)]
        window: usize,
    },
    /// Train every arm x seed, evaluate, and write the ablation table.
    Ablate {
        #[arg(long, value_delimiter = ',', default_value = "amp,amp_him,ampw_him,ampw_him_plus")]
        arms: Vec<String>,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        /// Shared base config for every arm (default: the desk preset).
        #[arg(long)]
        config: Option<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value = "ablation")]
        name: String,
        /// Return window in iterations.
        #[arg(long, default_value_t = 500)]
        window: usize,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long)]
        skip_eval: bool,
    },
    /// Write the default reference clips as CSV.
    ExportClips {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Dtw,
    Tracking,
    Style,
    Him,
}

fn runs_root() -> PathBuf {
    std::env::var_os("LOCOMIMIC_RUNS").map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

fn load_config(spec: Option<&str>, overrides: &[String]) -> Result<RunConfig> {
    let (text, origin) = match spec {
        None => (String::new(), "<defaults>".to_string()),
        Some(s) => match presets::get(s) {
            Some(t) if !Path::new(s).exists() => (t.to_string(), format!("preset {s}")),
            _ => (std::fs::read_to_string(s).with_context(|| format!("config {s}"))?, s.to_string()),
        },
    };
    Ok(RunConfig::from_text_with(&text, &origin, overrides)?)
}

fn log_progress(row: &MetricsRow) {
    let get = |k: &str| row.iter().find(|(n, _)| n == k).map_or(f64::NAN, |(_, v)| v.as_f64());
    let it = get("iter") as usize;
    if it.is_multiple_of(10) || it == 1 {
        log::info!(
            "iter {it} return {:.3} lin_track {:.3} style {:.3} falls {}",
            get("task_return"),
            get("lin_track_raw"),
            get("style_mean"),
            get("falls")
        );
    }
}

fn train(config: Option<String>, overrides: Vec<String>, seed: Option<u64>, run_id: Option<String>, resume: Option<String>) -> Result<()> {
    let root = runs_root();
    if let Some(id) = resume {
        let dir = root.join(&id);
        let m = resume_run(&dir, &mut log_progress).with_context(|| format!("resume {}", dir.display()))?;
        println!("{}", dir.display());
        log::info!("run {} complete at iteration {}", m.run_id, m.iterations_completed);
        return Ok(());
    }
    let mut overrides = overrides;
    if let Some(s) = seed {
        overrides.push(format!("train.seed={s}"));
    }
    let cfg = load_config(config.as_deref(), &overrides)?;
    let stem = config
        .as_deref()
        .map(|c| Path::new(c).file_stem().map_or(c.to_string(), |s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "default".into());
    let id = run_id.unwrap_or_else(|| format!("{stem}-s{}-{}", cfg.train.seed, &cfg.hash()[..8]));
    let dir = root.join(&id);
    if dir.join("manifest.json").exists() {
        bail!("run directory {} already exists (use --resume {id})", dir.display());
    }
    let m = train_run(cfg, &dir, &id, &mut log_progress).with_context(|| format!("train {}", dir.display()))?;
    println!("{}", dir.display());
    log::info!("run {} complete at iteration {}", m.run_id, m.iterations_completed);
    Ok(())
}

/// The run directory owning a checkpoint, if it has a manifest.
fn owning_run(checkpoint: &Path) -> Option<PathBuf> {
    let run = checkpoint.parent()?.parent()?;
    run.join("manifest.json").exists().then(|| run.to_path_buf())
}

fn eval_seeds(seed: u64, episodes: usize) -> Vec<u64> {
    (0..episodes as u64).map(|i| seed + i).collect()
}

/// Runs one suite on a checkpoint, writes its artifact into `out`, returns
/// the artifact file name and a one-line summary.
fn run_suite(checkpoint: &Path, suite: Suite, episodes: usize, seed: u64, window: usize, out: &Path) -> Result<(String, String)> {
    if !checkpoint.is_dir() {
        bail!("checkpoint not found: {}", checkpoint.display());
    }
    std::fs::create_dir_all(out).with_context(|| out.display().to_string())?;
    match suite {
        Suite::Style => {
            let run = owning_run(checkpoint).with_context(|| format!("no run directory owns {}", checkpoint.display()))?;
            let table = MetricsTable::read(&run.join("metrics.csv"))?;
            let iters = table.column("iter")?;
            let last = iters.last().copied().unwrap_or(0.0) as usize;
            let first = last.saturating_sub(window.saturating_sub(1)).max(1);
            let s = style_histogram(&table, first, last)?;
            let path = out.join("style_summary.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["first_iter", "last_iter", "count", "mean", "std", "bin", "bin_count"])?;
            for (k, c) in s.bins.iter().enumerate() {
                w.write_record([
                    first.to_string(),
                    last.to_string(),
                    s.count.to_string(),
                    format!("{:.16e}", s.mean),
                    format!("{:.16e}", s.std),
                    k.to_string(),
                    c.to_string(),
                ])?;
            }
            w.flush()?;
            Ok(("style_summary.csv".into(), format!("style mean {:.4} std {:.4} over {} samples", s.mean, s.std, s.count)))
        }
        Suite::Tracking => {
            let bundle = PolicyBundle::load(checkpoint)?;
            let mut subject = WalkerSubject::new(&bundle);
            let r = tracking_sweep(&mut subject, &TrackingSchedule::default(), &eval_seeds(seed, episodes))?;
            r.write_csv(&out.join("tracking_report.csv"))?;
            Ok((
                "tracking_report.csv".into(),
                format!(
                    "tracking mae {:.4} in_range {:.4} out_of_range {:.4} falls {}",
                    r.mae, r.in_range_mae, r.out_range_mae, r.falls
                ),
            ))
        }
        Suite::Dtw => {
            let bundle = PolicyBundle::load(checkpoint)?;
            let c = &bundle.cfg;
            let ds = MotionDataset::default_set(&c.morphology, c.sim.control_dt(), c.train.clip_duration_s)?;
            let rows = dtw_eval(&bundle, &ds, &eval_seeds(seed, episodes))?;
            write_dtw_csv(&out.join("dtw_results.csv"), &rows)?;
            Ok(("dtw_results.csv".into(), format!("dtw mean {:.4} over {} rollouts", mean_dtw(&rows), rows.len())))
        }
        Suite::Him => {
            let bundle = PolicyBundle::load(checkpoint)?;
            let r = him_probe(&bundle, episodes.max(4), 250, seed)?;
            let path = out.join("him_probe.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record([
                "velocity_mae",
                "zero_mae",
                "probe_accuracy",
                "train_samples",
                "test_samples",
                "vx_mae",
                "vy_mae",
                "vz_mae",
                "zero_vx_mae",
                "zero_vy_mae",
                "zero_vz_mae",
            ])?;
            w.write_record([
                format!("{:.16e}", r.velocity_mae),
                format!("{:.16e}", r.zero_mae),
                format!("{:.16e}", r.probe_accuracy),
                r.train_samples.to_string(),
                r.test_samples.to_string(),
                format!("{:.16e}", r.component_mae[0]),
                format!("{:.16e}", r.component_mae[1]),
                format!("{:.16e}", r.component_mae[2]),
                format!("{:.16e}", r.zero_component_mae[0]),
                format!("{:.16e}", r.zero_component_mae[1]),
                format!("{:.16e}", r.zero_component_mae[2]),
            ])?;
            w.flush()?;
            Ok((
                "him_probe.csv".into(),
                format!("him velocity mae {:.4} (zero {:.4}) probe accuracy {:.3}", r.velocity_mae, r.zero_mae, r.probe_accuracy),
            ))
        }
    }
}

fn eval(checkpoint: PathBuf, suite: Suite, episodes: usize, seed: u64, window: usize) -> Result<()> {
    if !checkpoint.is_dir() {
        bail!("checkpoint not found: {}", checkpoint.display());
    }
    let run = owning_run(&checkpoint);
    let out = run.as_ref().map_or_else(|| checkpoint.join("eval"), |r| r.join("eval"));
    let (file, summary) = run_suite(&checkpoint, suite, episodes, seed, window, &out)?;
    if let Some(run) = run {
        let mut m = RunManifest::read(&run)?;
        m.add_artifact(&format!("eval/{file}"));
        m.write(&run)?;
    }
    println!("{summary}");
    println!("{}", out.join(file).display());
    Ok(())
}

struct CellEval {
    arm: String,
    seed: u64,
    tracking: Option<(f64, f64, f64)>,
    dtw: Option<f64>,
    him: Option<(f64, f64, f64)>,
}

#[allow(clippy::too_many_arguments)]
fn ablate(arms: Vec<String>, seeds: u64, config: Option<String>, overrides: Vec<String>, name: String, window: usize, episodes: usize, skip_eval: bool) -> Result<()> {
    if seeds == 0 || arms.is_empty() {
        bail!("ablate needs at least one arm and one seed");
    }
    let root = runs_root().join(&name);
    std::fs::create_dir_all(&root).with_context(|| root.display().to_string())?;
    let base = match config.as_deref() {
        None => presets::get("desk").expect("desk preset").to_string(),
        Some(s) => match presets::get(s) {
            Some(t) if !Path::new(s).exists() => t.to_string(),
            _ => std::fs::read_to_string(s).with_context(|| format!("config {s}"))?,
        },
    };
    // arm configs: shared base, then the arm's toggles, then user overrides
    let mut arm_cfgs = Vec::new();
    for arm in &arms {
        let toggles = presets::get(arm).with_context(|| format!("unknown arm {arm}"))?;
        let mut cfgs = Vec::new();
        for k in 0..seeds {
            let mut ov = overrides.clone();
            ov.push(format!("train.seed={k}"));
            let text = format!("{base}\n{toggles}\n");
            cfgs.push(RunConfig::from_text_with(&text, arm, &ov)?);
        }
        arm_cfgs.push((arm.clone(), cfgs));
    }
    let parity = arm_cfgs[0].1[0].hash_without_toggles();
    for (arm, cfgs) in &arm_cfgs {
        if cfgs[0].hash_without_toggles() != parity {
            bail!("arm {arm} differs from {} in more than the arm toggles", arm_cfgs[0].0);
        }
    }

    let mut cells = Vec::new();
    let mut evals = Vec::new();
    for (arm, cfgs) in arm_cfgs {
        for (k, cfg) in cfgs.into_iter().enumerate() {
            let id = format!("{arm}-s{k}");
            let dir = root.join(&id);
            let hash = cfg.hash();
            let iterations = cfg.train.iterations;
            let existing = RunManifest::read(&dir).ok();
            let outcome = match existing {
                Some(m) if m.config_hash == hash && m.status == RunStatus::Complete => {
                    log::info!("{id}: complete, reusing");
                    Ok(m)
                }
                Some(m) if m.config_hash == hash => {
                    log::info!("{id}: resuming at iteration {}", m.iterations_completed);
                    resume_run(&dir, &mut log_progress)
                }
                Some(_) => bail!("{} holds a run with a different config; pick another --name", dir.display()),
                None => {
                    log::info!("{id}: training {iterations} iterations");
                    train_run(cfg, &dir, &id, &mut log_progress)
                }
            };
            let (mean_return, done) = match &outcome {
                Ok(m) => {
                    let t = MetricsTable::read(&dir.join("metrics.csv"))?;
                    let r = if t.rows.is_empty() { None } else { Some(windowed_return(&t, window)?.0) };
                    (r, m.iterations_completed)
                }
                Err(e) => {
                    log::error!("{id}: {e}");
                    (None, 0)
                }
            };
            cells.push(AblationCell {
                arm: arm.clone(),
                seed: k as u64,
                mean_return,
                iterations: done,
                complete: outcome.is_ok() && done == iterations,
            });
            if skip_eval || outcome.is_err() {
                continue;
            }
            let ck = latest_checkpoint(&dir)?;
            let out = dir.join("eval");
            let mut ev = CellEval { arm: arm.clone(), seed: k as u64, tracking: None, dtw: None, him: None };
            let mut m = RunManifest::read(&dir)?;
            for suite in [Suite::Tracking, Suite::Dtw, Suite::Him] {
                if matches!(suite, Suite::Him) && !PolicyBundle::load(&ck)?.cfg.train.use_him {
                    continue;
                }
                let (file, summary) = run_suite(&ck, suite, episodes, 1_000_000, window, &out)?;
                log::info!("{id}: {summary}");
                m.add_artifact(&format!("eval/{file}"));
                match suite {
                    Suite::Tracking => {
                        let r = locomimic::evalkit::TrackingReport::read_csv(&out.join(&file))?;
                        ev.tracking = Some((r.mae, r.in_range_mae, r.out_range_mae));
                    }
                    Suite::Dtw => {
                        let mut rd = csv::Reader::from_path(out.join(&file))?;
                        let mut d = Vec::new();
                        for rec in rd.records() {
                            d.push(rec?.get(4).unwrap_or("nan").parse::<f64>()?);
                        }
                        ev.dtw = Some(d.iter().sum::<f64>() / d.len() as f64);
                    }
                    Suite::Him => {
                        let mut rd = csv::Reader::from_path(out.join(&file))?;
                        if let Some(rec) = rd.records().next() {
                            let rec = rec?;
                            let f = |i: usize| rec.get(i).unwrap_or("nan").parse::<f64>().unwrap_or(f64::NAN);
                            ev.him = Some((f(0), f(1), f(2)));
                        }
                    }
                    Suite::Style => {}
                }
            }
            m.write(&dir)?;
            evals.push(ev);
        }
    }

    let rows = ablation_table(&cells);
    write_ablation_csv(&root.join("ablation_table.csv"), &rows)?;
    write_cells_csv(&root.join("ablation_cells.csv"), &cells)?;
    if !evals.is_empty() {
        write_eval_summary(&root.join("eval_summary.csv"), &evals)?;
    }
    for r in &rows {
        println!(
            "{:<16} seeds {} mean {:.4} std {:.4} median {:.4}{}",
            r.arm,
            r.seeds,
            r.mean,
            r.std,
            r.median,
            if r.complete { "" } else { " (incomplete)" }
        );
    }
    for (better, worse) in [("ampw_him_plus", "amp"), ("amp_him", "amp")] {
        if let Some(ok) = ordering_holds(&rows, better, worse) {
            println!("ordering {better} >= {worse}: {}", if ok { "holds" } else { "violated" });
        }
    }
    println!("{}", root.join("ablation_table.csv").display());
    Ok(())
}

fn write_eval_summary(path: &Path, evals: &[CellEval]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "arm",
        "seed",
        "tracking_mae",
        "tracking_in_range_mae",
        "tracking_out_of_range_mae",
        "dtw_mean",
        "him_velocity_mae",
        "him_zero_mae",
        "him_probe_accuracy",
    ])?;
    let f = |v: Option<f64>| v.map_or("nan".to_string(), |v| format!("{v:.16e}"));
    for e in evals {
        w.write_record([
            e.arm.clone(),
            e.seed.to_string(),
            f(e.tracking.map(|t| t.0)),
            f(e.tracking.map(|t| t.1)),
            f(e.tracking.map(|t| t.2)),
            f(e.dtw),
            f(e.him.map(|h| h.0)),
            f(e.him.map(|h| h.1)),
            f(e.him.map(|h| h.2)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn export_clips(out: PathBuf) -> Result<()> {
    std::fs::create_dir_all(&out).with_context(|| out.display().to_string())?;
    let cfg = RunConfig::default();
    let ds = MotionDataset::default_set(&cfg.morphology, cfg.sim.control_dt(), cfg.train.clip_duration_s)?;
    for clip in ds.clips() {
        let path = out.join(format!("{}_{:+.2}.csv", clip.label, clip.nominal_speed));
        save_clip(&path, clip, &cfg.morphology)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Train { config, overrides, seed, run_id, resume } => train(config, overrides, seed, run_id, resume),
        Cmd::Eval { checkpoint, suite, episodes, seed, window } => eval(checkpoint, suite, episodes, seed, window),
        Cmd::Ablate { arms, seeds, config, overrides, name, window, episodes, skip_eval } => {
            ablate(arms, seeds, config, overrides, name, window, episodes, skip_eval)
        }
        Cmd::ExportClips { out } => export_clips(out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
