//! Hybrid internal model: an encoder over the observation history that
//! outputs an explicit base-velocity estimate and a unit-norm latent.
//!
//! The velocity head is supervised with simulator ground truth. The latent
//! is trained with InfoNCE against embeddings of the next observation frame
//! produced by a fixed projection head; those targets are constants for the
//! backward pass.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{Activation, Adam, NetError, NetParams, NetSpec};
use crate::sim::ObservationFrame;

#[derive(Debug, Error)]
pub enum HimError {
    #[error("history has {got} frames, expected {expected}")]
    HistoryLength { expected: usize, got: usize },
    #[error("contrastive loss needs a batch of at least 2, got {0}")]
    BatchTooSmall(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HimConfig {
    pub history_len: usize,
    pub latent_dim: usize,
    pub temperature: f64,
    pub hidden: Vec<usize>,
    pub velocity_weight: f64,
    pub contrastive_weight: f64,
    pub lr: f64,
}

impl Default for HimConfig {
    fn default() -> Self {
        HimConfig {
            history_len: 6,
            latent_dim: 16,
            temperature: 0.1,
            hidden: vec![128, 64],
            velocity_weight: 1.0,
            contrastive_weight: 1.0,
            lr: 1e-3,
        }
    }
}

impl HimConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.history_len == 0 || self.latent_dim == 0 {
            return Err("him.history_len and him.latent_dim must be positive".into());
        }
        if !(self.temperature > 0.0) {
            return Err(format!("him.temperature must be > 0, got {}", self.temperature));
        }
        if !(self.velocity_weight >= 0.0 && self.contrastive_weight >= 0.0) {
            return Err("him loss weights must be >= 0".into());
        }
        if !(self.lr > 0.0) {
            return Err("him.lr must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HimOutput {
    pub v_hat: [f64; 3],
    pub z: Vec<f64>,
}

impl HimOutput {
    /// `v_hat ⊕ z`, the policy-side extension of the observation.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.v_hat.to_vec();
        v.extend_from_slice(&self.z);
        v
    }
}

/// Unit vector along `v`; the zero vector maps to the first axis.
pub fn normalize(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 1e-12 {
        v.iter().map(|x| x / n).collect()
    } else {
        let mut e = vec![0.0; v.len()];
        e[0] = 1.0;
        e
    }
}

/// Mean squared error over all components, with its gradient w.r.t. `pred`.
pub fn velocity_loss(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<(f64, Array2<f64>), HimError> {
    if pred.dim() != target.dim() {
        return Err(HimError::Shape(format!("{:?} vs {:?}", pred.dim(), target.dim())));
    }
    let n = pred.len() as f64;
    let diff = &pred - &target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok((loss, diff.mapv(|d| 2.0 * d / n)))
}

/// InfoNCE over cosine similarities between rows of `z` and rows of `targets`;
/// row `i` of `targets` is the positive for row `i` of `z`. Returns the mean
/// loss and its gradient w.r.t. `z` (targets are constants).
pub fn contrastive_loss(z: ArrayView2<f64>, targets: ArrayView2<f64>, temperature: f64) -> Result<(f64, Array2<f64>), HimError> {
    let b = z.nrows();
    if b < 2 {
        return Err(HimError::BatchTooSmall(b));
    }
    if z.dim() != targets.dim() {
        return Err(HimError::Shape(format!("{:?} vs {:?}", z.dim(), targets.dim())));
    }
    let unit = |m: ArrayView2<f64>| -> (Array2<f64>, Vec<f64>) {
        let mut u = m.to_owned();
        let mut norms = Vec::with_capacity(m.nrows());
        for mut row in u.axis_iter_mut(Axis(0)) {
            let n = row.dot(&row).sqrt().max(1e-12);
            row /= n;
            norms.push(n);
        }
        (u, norms)
    };
    let (zu, znorm) = unit(z);
    let (tu, _) = unit(targets);
    let logits = zu.dot(&tu.t()) / temperature;
    let mut loss = 0.0;
    let mut dlogits = Array2::zeros((b, b));
    for i in 0..b {
        let row = logits.row(i);
        let m = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        let sum: f64 = row.iter().map(|v| (v - m).exp()).sum();
        loss += m + sum.ln() - row[i];
        for j in 0..b {
            dlogits[[i, j]] = (row[j] - m).exp() / sum - if i == j { 1.0 } else { 0.0 };
        }
    }
    let bf = b as f64;
    dlogits /= bf;
    // d/d zu, then through the row normalization
    let dzu = dlogits.dot(&tu) / temperature;
    let mut dz = Array2::zeros(z.dim());
    for i in 0..b {
        let u = zu.row(i);
        let g = dzu.row(i);
        let radial = u.dot(&g);
        let mut out = dz.row_mut(i);
        out.assign(&((&g - &(&u * radial)) / znorm[i]));
    }
    Ok((loss / bf, dz))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HimStats {
    pub velocity_loss: f64,
    pub contrastive_loss: f64,
    pub velocity_mae: f64,
}

/// Estimator, fixed target head and optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct HimEstimator {
    pub encoder: NetParams,
    pub target: NetParams,
    pub adam: Adam,
    pub cfg: HimConfig,
    obs_dim: usize,
}

impl HimEstimator {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, cfg: HimConfig, rng: &mut R) -> Result<Self, HimError> {
        let enc = NetSpec::mlp(obs_dim * cfg.history_len, &cfg.hidden, 3 + cfg.latent_dim, Activation::Elu);
        let encoder = NetParams::init(enc, 0.1, rng)?;
        let tgt = NetSpec::mlp(obs_dim, &cfg.hidden, cfg.latent_dim, Activation::Elu);
        let target = NetParams::init(tgt, 1.0, rng)?;
        let adam = Adam::new(&encoder, cfg.lr);
        Ok(HimEstimator { encoder, target, adam, cfg, obs_dim })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn output_dim(&self) -> usize {
        3 + self.cfg.latent_dim
    }

    /// Flattens an observation history, oldest first.
    pub fn flatten_history(&self, frames: &[ObservationFrame]) -> Result<Vec<f64>, HimError> {
        if frames.len() != self.cfg.history_len {
            return Err(HimError::HistoryLength { expected: self.cfg.history_len, got: frames.len() });
        }
        let mut v = Vec::with_capacity(self.obs_dim * frames.len());
        for f in frames {
            f.write_into(&mut v);
        }
        Ok(v)
    }

    /// Batched encoding of flattened histories (one per row).
    pub fn encode_batch(&self, histories: ArrayView2<f64>) -> Result<Vec<HimOutput>, HimError> {
        let raw = self.encoder.predict(histories)?;
        Ok(raw
            .axis_iter(Axis(0))
            .map(|row| HimOutput {
                v_hat: [row[0], row[1], row[2]],
                z: normalize(row.slice(s![3..]).as_slice().unwrap()),
            })
            .collect())
    }

    pub fn encode(&self, frames: &[ObservationFrame]) -> Result<HimOutput, HimError> {
        let h = self.flatten_history(frames)?;
        let x = Array2::from_shape_vec((1, h.len()), h).expect("row shape");
        Ok(self.encode_batch(x.view())?.remove(0))
    }

    /// Normalized target embeddings of next-step observations.
    pub fn target_embeddings(&self, next_obs: ArrayView2<f64>) -> Result<Array2<f64>, HimError> {
        let mut t = self.target.predict(next_obs)?;
        for mut row in t.axis_iter_mut(Axis(0)) {
            let u = normalize(row.as_slice().unwrap());
            row.assign(&ndarray::Array1::from(u));
        }
        Ok(t)
    }

    /// Weighted velocity + contrastive loss and encoder gradients.
    pub fn loss(
        &self,
        histories: ArrayView2<f64>,
        next_obs: ArrayView2<f64>,
        v_true: ArrayView2<f64>,
    ) -> Result<(f64, HimStats, crate::net::GradTape), HimError> {
        let cache = self.encoder.forward(histories)?;
        let out = cache.output();
        let v = out.slice(s![.., 0..3]);
        let z = out.slice(s![.., 3..]);
        let (vl, vg) = velocity_loss(v, v_true)?;
        let targets = self.target_embeddings(next_obs)?;
        let (cl, cg) = contrastive_loss(z, targets.view(), self.cfg.temperature)?;
        let mut g = Array2::zeros(out.dim());
        g.slice_mut(s![.., 0..3]).assign(&(vg * self.cfg.velocity_weight));
        g.slice_mut(s![.., 3..]).assign(&(cg * self.cfg.contrastive_weight));
        let tape = self.encoder.backward(&cache, g.view())?;
        let mae = (&v - &v_true).mapv(f64::abs).mean().unwrap_or(0.0);
        let stats = HimStats {
            velocity_loss: vl,
            contrastive_loss: cl,
            velocity_mae: mae,
        };
        Ok((self.cfg.velocity_weight * vl + self.cfg.contrastive_weight * cl, stats, tape))
    }

    pub fn update(&mut self, histories: ArrayView2<f64>, next_obs: ArrayView2<f64>, v_true: ArrayView2<f64>, clip: f64) -> Result<HimStats, HimError> {
        let (loss, stats, mut grad) = self.loss(histories, next_obs, v_true)?;
        if loss.is_finite() && grad.is_finite() {
            grad.clip_norm(clip);
            self.adam.step(&mut self.encoder, &grad)?;
        }
        Ok(stats)
    }
}
