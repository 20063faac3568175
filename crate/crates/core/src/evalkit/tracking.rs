use std::path::Path;

use super::{csv_err, EvalError};
use crate::sim::{Command, Walker};
use crate::trainer::PolicyBundle;

/// Commands beyond this magnitude lie outside the reference clips' walking range.
pub const CLIP_RANGE: f64 = 0.4;

/// Piecewise-constant command sweep with abrupt transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingSchedule {
    pub segments: Vec<f64>,
    pub segment_s: f64,
}

impl Default for TrackingSchedule {
    fn default() -> Self {
        TrackingSchedule {
            segments: vec![-0.5, -0.2, 0.2, 0.5, 0.75, 0.0],
            segment_s: 5.0,
        }
    }
}

impl TrackingSchedule {
    pub fn steps_per_segment(&self, dt: f64) -> usize {
        (self.segment_s / dt).round().max(1.0) as usize
    }
}

/// Something whose forward velocity can be commanded: the walker under a
/// policy, or a stub in tests.
pub trait TrackingSubject {
    fn dt(&self) -> f64;
    /// Starts one episode per seed.
    fn reset(&mut self, seeds: &[u64]) -> Result<(), EvalError>;
    /// Advances every episode one control step; returns realized velocities.
    fn step(&mut self, commands: &[f64]) -> Result<Vec<f64>, EvalError>;
    /// Falls so far in this sweep.
    fn falls(&self) -> usize {
        0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingSample {
    pub episode: usize,
    pub step: usize,
    pub time: f64,
    pub segment: usize,
    pub v_cmd: f64,
    pub v: f64,
}

impl TrackingSample {
    pub fn in_range(&self) -> bool {
        self.v_cmd.abs() <= CLIP_RANGE
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentError {
    pub segment: usize,
    pub v_cmd: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingReport {
    pub samples: Vec<TrackingSample>,
    pub mae: f64,
    pub in_range_mae: f64,
    pub out_range_mae: f64,
    pub segments: Vec<SegmentError>,
    pub falls: usize,
}

/// Mean |v_cmd - v| in sample order; NaN when empty.
pub fn mean_abs_error<'a>(samples: impl Iterator<Item = &'a TrackingSample>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for s in samples {
        sum += (s.v_cmd - s.v).abs();
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

impl TrackingReport {
    pub fn from_samples(samples: Vec<TrackingSample>, num_segments: usize, falls: usize) -> Self {
        let segments = (0..num_segments)
            .map(|k| SegmentError {
                segment: k,
                v_cmd: samples.iter().find(|s| s.segment == k).map_or(f64::NAN, |s| s.v_cmd),
                mae: mean_abs_error(samples.iter().filter(|s| s.segment == k)),
            })
            .collect();
        TrackingReport {
            mae: mean_abs_error(samples.iter()),
            in_range_mae: mean_abs_error(samples.iter().filter(|s| s.in_range())),
            out_range_mae: mean_abs_error(samples.iter().filter(|s| !s.in_range())),
            segments,
            falls,
            samples,
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(["episode", "step", "time", "segment", "v_cmd", "v", "abs_err", "in_range"])
            .map_err(|e| csv_err(path, e))?;
        for s in &self.samples {
            w.write_record([
                s.episode.to_string(),
                s.step.to_string(),
                format!("{:.16e}", s.time),
                s.segment.to_string(),
                format!("{:.16e}", s.v_cmd),
                format!("{:.16e}", s.v),
                format!("{:.16e}", (s.v_cmd - s.v).abs()),
                u8::from(s.in_range()).to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| csv_err(path, e))
    }

    /// Reads the sample series back; summary values are recomputed from it.
    pub fn read_csv(path: &Path) -> Result<Self, EvalError> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let mut samples = Vec::new();
        let mut nseg = 0;
        for rec in r.records() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let f = |i: usize| -> Result<f64, EvalError> {
                rec.get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| EvalError::Input(format!("{}: bad field {i}", path.display())))
            };
            let s = TrackingSample {
                episode: f(0)? as usize,
                step: f(1)? as usize,
                time: f(2)?,
                segment: f(3)? as usize,
                v_cmd: f(4)?,
                v: f(5)?,
            };
            nseg = nseg.max(s.segment + 1);
            samples.push(s);
        }
        Ok(Self::from_samples(samples, nseg, 0))
    }
}

/// Runs the schedule once per seed, all episodes in lockstep.
pub fn tracking_sweep(subject: &mut dyn TrackingSubject, schedule: &TrackingSchedule, seeds: &[u64]) -> Result<TrackingReport, EvalError> {
    if schedule.segments.is_empty() || seeds.is_empty() {
        return Err(EvalError::Input("tracking sweep needs at least one segment and one episode".into()));
    }
    let dt = subject.dt();
    let per_seg = schedule.steps_per_segment(dt);
    subject.reset(seeds)?;
    let mut samples = Vec::with_capacity(seeds.len() * per_seg * schedule.segments.len());
    let total = per_seg * schedule.segments.len();
    for step in 0..total {
        let segment = step / per_seg;
        let v_cmd = schedule.segments[segment];
        let v = subject.step(&vec![v_cmd; seeds.len()])?;
        for (episode, &v) in v.iter().enumerate() {
            samples.push(TrackingSample {
                episode,
                step,
                time: (step + 1) as f64 * dt,
                segment,
                v_cmd,
                v,
            });
        }
    }
    // episode-major order
    samples.sort_by_key(|s| (s.episode, s.step));
    Ok(TrackingReport::from_samples(samples, schedule.segments.len(), subject.falls()))
}

/// The policy in a checkpoint driving a batch of walkers. Fallen walkers are
/// reset with a derived seed and keep going; timeouts are ignored.
pub struct WalkerSubject<'a> {
    pub bundle: &'a PolicyBundle,
    pub walkers: Vec<Walker>,
    seeds: Vec<u64>,
    falls: usize,
}

impl<'a> WalkerSubject<'a> {
    pub fn new(bundle: &'a PolicyBundle) -> Self {
        WalkerSubject { bundle, walkers: Vec::new(), seeds: Vec::new(), falls: 0 }
    }
}

impl TrackingSubject for WalkerSubject<'_> {
    fn dt(&self) -> f64 {
        self.bundle.cfg.sim.control_dt()
    }

    fn reset(&mut self, seeds: &[u64]) -> Result<(), EvalError> {
        let c = &self.bundle.cfg;
        self.walkers.clear();
        for &s in seeds {
            let mut w = Walker::new(c.morphology.clone(), c.sim.clone(), c.randomization.clone())?;
            w.set_command(Command::forward(0.0));
            w.reset(s);
            self.walkers.push(w);
        }
        self.seeds = seeds.to_vec();
        self.falls = 0;
        Ok(())
    }

    fn step(&mut self, commands: &[f64]) -> Result<Vec<f64>, EvalError> {
        for (w, &c) in self.walkers.iter_mut().zip(commands) {
            w.set_command(Command::forward(c));
        }
        let targets = self.bundle.targets(&self.walkers)?;
        let mut v = Vec::with_capacity(self.walkers.len());
        for (i, (w, a)) in self.walkers.iter_mut().zip(&targets).enumerate() {
            let fell = match w.step(a) {
                Ok(r) => {
                    v.push(r.state.base_lin_vel[0]);
                    r.fell
                }
                Err(_) => {
                    v.push(0.0);
                    true
                }
            };
            if fell {
                self.falls += 1;
                self.seeds[i] = self.seeds[i].wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                w.reset(self.seeds[i]);
            }
        }
        Ok(v)
    }

    fn falls(&self) -> usize {
        self.falls
    }
}
