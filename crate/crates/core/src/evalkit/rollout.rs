//! Evaluations that roll a checkpointed policy out on fresh walkers.

use std::path::Path;

use super::dtw::dtw;
use super::{csv_err, EvalError};
use crate::motion::{Gait, MotionDataset};
use crate::sim::{Command, HiddenState, Walker};
use crate::trainer::PolicyBundle;

fn walkers(bundle: &PolicyBundle, cmd: f64, seeds: &[u64]) -> Result<Vec<Walker>, EvalError> {
    let c = &bundle.cfg;
    seeds
        .iter()
        .map(|&s| {
            let mut w = Walker::new(c.morphology.clone(), c.sim.clone(), c.randomization.clone())?;
            w.set_command(Command::forward(cmd));
            w.reset(s);
            Ok(w)
        })
        .collect()
}

fn step_all(bundle: &PolicyBundle, ws: &mut [Walker]) -> Result<(), EvalError> {
    let targets = bundle.targets(ws)?;
    for (w, a) in ws.iter_mut().zip(&targets) {
        // a diverged walker keeps its last state; DTW then scores it as frozen
        let _ = w.step(a);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DtwRow {
    pub clip: usize,
    pub gait: Gait,
    pub speed: f64,
    pub episode: usize,
    pub distance: f64,
    pub frames: usize,
}

/// Rolls out one episode per seed for every reference clip with the clip's
/// speed as command and scores joint positions against the clip.
pub fn dtw_eval(bundle: &PolicyBundle, dataset: &MotionDataset, seeds: &[u64]) -> Result<Vec<DtwRow>, EvalError> {
    let mut rows = Vec::new();
    for (ci, clip) in dataset.clips().iter().enumerate() {
        let reference: Vec<Vec<f64>> = clip.frames.iter().map(|f| f.dof_pos.clone()).collect();
        let mut ws = walkers(bundle, clip.nominal_speed, seeds)?;
        let mut seqs: Vec<Vec<Vec<f64>>> = ws.iter().map(|w| vec![w.state().dof_pos.clone()]).collect();
        for _ in 1..reference.len() {
            step_all(bundle, &mut ws)?;
            for (s, w) in seqs.iter_mut().zip(&ws) {
                s.push(w.state().dof_pos.clone());
            }
        }
        for (episode, s) in seqs.iter().enumerate() {
            rows.push(DtwRow {
                clip: ci,
                gait: clip.label,
                speed: clip.nominal_speed,
                episode,
                distance: dtw(s, &reference)?.distance,
                frames: s.len(),
            });
        }
    }
    Ok(rows)
}

pub fn mean_dtw(rows: &[DtwRow]) -> f64 {
    rows.iter().map(|r| r.distance).sum::<f64>() / rows.len() as f64
}

pub fn write_dtw_csv(path: &Path, rows: &[DtwRow]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["clip", "gait", "speed", "episode", "distance", "frames"])
        .map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([
            r.clip.to_string(),
            r.gait.to_string(),
            format!("{:.16e}", r.speed),
            r.episode.to_string(),
            format!("{:.16e}", r.distance),
            r.frames.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| csv_err(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSample {
    pub episode: usize,
    pub run: bool,
    pub v_hat: [f64; 3],
    pub v_true: [f64; 3],
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HimProbeReport {
    /// Held-out mean |v_hat - v| over the three components.
    pub velocity_mae: f64,
    /// Same with v_hat = 0.
    pub zero_mae: f64,
    /// Per-component held-out errors (x, y, z) of the estimate and of zero.
    pub component_mae: [f64; 3],
    pub zero_component_mae: [f64; 3],
    /// Held-out accuracy of a logistic probe on z for walk vs run commands.
    pub probe_accuracy: f64,
    pub train_samples: usize,
    pub test_samples: usize,
}

/// Walk commands come from the walking clip speeds, run commands from the
/// running ones. Even episodes train the probe, odd ones are held out.
pub fn him_probe(bundle: &PolicyBundle, episodes: usize, steps: usize, seed: u64) -> Result<HimProbeReport, EvalError> {
    if bundle.him.is_none() {
        return Err(EvalError::Input("checkpoint has no estimator (use_him is off)".into()));
    }
    let walk = [-0.4, -0.2, 0.2, 0.4];
    let run = [0.8, 1.0];
    let mut samples = Vec::new();
    let warmup = 25;
    for e in 0..episodes {
        let is_run = e % 4 >= 2;
        let cmd = if is_run { run[(e / 4) % run.len()] } else { walk[(e / 4) % walk.len()] };
        let mut ws = walkers(bundle, cmd, &[seed.wrapping_add(1_000_003 * e as u64)])?;
        for t in 0..warmup + steps {
            if t >= warmup && (t - warmup) % 5 == 0 {
                let lat = bundle.latents(&ws)?.expect("estimator present");
                let row = lat.row(0);
                let hs = HiddenState::from_state(ws[0].state());
                samples.push(ProbeSample {
                    episode: e,
                    run: is_run,
                    v_hat: [row[0], row[1], row[2]],
                    v_true: hs.base_lin_vel,
                    z: row.iter().skip(3).copied().collect(),
                });
            }
            step_all(bundle, &mut ws)?;
        }
    }
    let (train, test): (Vec<&ProbeSample>, Vec<&ProbeSample>) = samples.iter().partition(|s| s.episode % 2 == 0);
    if train.is_empty() || test.is_empty() {
        return Err(EvalError::Input("probe needs at least four episodes".into()));
    }
    let mae = |f: &dyn Fn(&ProbeSample) -> [f64; 3]| {
        test.iter().map(|s| (0..3).map(|k| (f(s)[k] - s.v_true[k]).abs()).sum::<f64>()).sum::<f64>() / (3 * test.len()) as f64
    };
    let velocity_mae = mae(&|s| s.v_hat);
    let zero_mae = mae(&|_| [0.0; 3]);
    let per = |f: &dyn Fn(&ProbeSample) -> [f64; 3]| -> [f64; 3] {
        std::array::from_fn(|k| test.iter().map(|s| (f(s)[k] - s.v_true[k]).abs()).sum::<f64>() / test.len() as f64)
    };
    let component_mae = per(&|s| s.v_hat);
    let zero_component_mae = per(&|_| [0.0; 3]);
    let xs: Vec<&[f64]> = train.iter().map(|s| s.z.as_slice()).collect();
    let ys: Vec<bool> = train.iter().map(|s| s.run).collect();
    let probe = LogisticProbe::fit(&xs, &ys, 2000, 0.5, 1e-3);
    let correct = test.iter().filter(|s| probe.predict(&s.z) == s.run).count();
    Ok(HimProbeReport {
        velocity_mae,
        zero_mae,
        component_mae,
        zero_component_mae,
        probe_accuracy: correct as f64 / test.len() as f64,
        train_samples: train.len(),
        test_samples: test.len(),
    })
}

/// Standardized-input logistic regression trained by full-batch gradient descent.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticProbe {
    mean: Vec<f64>,
    scale: Vec<f64>,
    w: Vec<f64>,
    b: f64,
}

impl LogisticProbe {
    pub fn fit(xs: &[&[f64]], ys: &[bool], iters: usize, lr: f64, l2: f64) -> Self {
        let d = xs.first().map_or(0, |x| x.len());
        let n = xs.len().max(1) as f64;
        let mean: Vec<f64> = (0..d).map(|k| xs.iter().map(|x| x[k]).sum::<f64>() / n).collect();
        let scale: Vec<f64> = (0..d)
            .map(|k| {
                let v = xs.iter().map(|x| (x[k] - mean[k]).powi(2)).sum::<f64>() / n;
                if v > 1e-12 { 1.0 / v.sqrt() } else { 1.0 }
            })
            .collect();
        let mut p = LogisticProbe { mean, scale, w: vec![0.0; d], b: 0.0 };
        let zs: Vec<Vec<f64>> = xs.iter().map(|x| p.standardize(x)).collect();
        for _ in 0..iters {
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for (z, &y) in zs.iter().zip(ys) {
                let err = p.prob_std(z) - if y { 1.0 } else { 0.0 };
                for k in 0..d {
                    gw[k] += err * z[k] / n;
                }
                gb += err / n;
            }
            for k in 0..d {
                p.w[k] -= lr * (gw[k] + l2 * p.w[k]);
            }
            p.b -= lr * gb;
        }
        p
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.scale).map(|((x, m), s)| (x - m) * s).collect()
    }

    fn prob_std(&self, z: &[f64]) -> f64 {
        let a: f64 = self.b + z.iter().zip(&self.w).map(|(z, w)| z * w).sum::<f64>();
        1.0 / (1.0 + (-a).exp())
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.prob_std(&self.standardize(x)) >= 0.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probe_separates_shifted_clusters() {
        let pts: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 20) as f64 * 0.01 + if i < 20 { 0.0 } else { 1.0 }, 0.5]).collect();
        let ys: Vec<bool> = (0..40).map(|i| i >= 20).collect();
        let xs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let p = LogisticProbe::fit(&xs, &ys, 500, 0.5, 0.0);
        assert!(pts.iter().zip(&ys).all(|(x, &y)| p.predict(x) == y));
    }
}
