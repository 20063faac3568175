//! Diagonal-Gaussian policy, PPO losses and the value regression.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::net::{GradTape, NetError, NetParams};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log N(a; mean, exp(log_std)^2)` summed over action dimensions.
pub fn gaussian_log_prob(mean: ArrayView1<f64>, log_std: &[f64], action: ArrayView1<f64>) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((&m, &ls), &a)| {
            let z = (a - m) * (-ls).exp();
            -0.5 * z * z - ls - 0.5 * LN_2PI
        })
        .sum()
}

/// Differential entropy of the diagonal Gaussian.
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 * (LN_2PI + 1.0)).sum()
}

pub fn sample_action<R: Rng + ?Sized>(mean: ArrayView1<f64>, log_std: &[f64], rng: &mut R) -> Vec<f64> {
    mean.iter()
        .zip(log_std)
        .map(|(&m, &ls)| {
            let e: f64 = rng.sample(StandardNormal);
            m + ls.exp() * e
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SurrogateStats {
    pub surrogate: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Gradients of the actor objective.
#[derive(Debug, Clone)]
pub struct ActorGrad {
    pub net: GradTape,
    pub log_std: Vec<f64>,
}

/// Clipped surrogate minus `entropy_coef` times the entropy.
///
/// `loss = -mean_i min(r_i A_i, clip(r_i, 1-ε, 1+ε) A_i) - c H`, with
/// `r_i = exp(log π(a_i|s_i) - old_log_prob_i)`.
#[allow(clippy::too_many_arguments)]
pub fn actor_loss(
    actor: &NetParams,
    log_std: &[f64],
    obs: ArrayView2<f64>,
    actions: ArrayView2<f64>,
    old_log_prob: ArrayView1<f64>,
    advantages: ArrayView1<f64>,
    clip: f64,
    entropy_coef: f64,
) -> Result<(f64, SurrogateStats, ActorGrad), NetError> {
    let n = obs.nrows();
    if n == 0 {
        return Err(NetError::EmptyBatch);
    }
    let cache = actor.forward(obs)?;
    let mean = cache.output();
    if mean.ncols() != log_std.len() || actions.dim() != mean.dim() {
        return Err(NetError::ShapeMismatch);
    }
    let nf = n as f64;
    let inv_var: Vec<f64> = log_std.iter().map(|ls| (-2.0 * ls).exp()).collect();
    let mut d_mean = Array2::zeros(mean.dim());
    let mut d_log_std = vec![0.0; log_std.len()];
    let mut surrogate = 0.0;
    let mut kl = 0.0;
    let mut clipped = 0usize;
    for i in 0..n {
        let m = mean.row(i);
        let a = actions.row(i);
        let logp = gaussian_log_prob(m, log_std, a);
        let log_ratio = logp - old_log_prob[i];
        let ratio = log_ratio.exp();
        let adv = advantages[i];
        let unclipped = ratio * adv;
        let clipped_ratio = ratio.clamp(1.0 - clip, 1.0 + clip);
        let clipped_obj = clipped_ratio * adv;
        if (ratio - 1.0).abs() > clip {
            clipped += 1;
        }
        kl += (ratio - 1.0) - log_ratio;
        let obj = unclipped.min(clipped_obj);
        surrogate -= obj / nf;
        // gradient flows only through the unclipped branch when it is the minimum
        if unclipped <= clipped_obj {
            let d_logp = -adv * ratio / nf;
            for j in 0..m.len() {
                let diff = a[j] - m[j];
                d_mean[[i, j]] = d_logp * diff * inv_var[j];
                d_log_std[j] += d_logp * (diff * diff * inv_var[j] - 1.0);
            }
        }
    }
    let entropy = gaussian_entropy(log_std);
    for g in &mut d_log_std {
        *g -= entropy_coef;
    }
    let net = actor.backward(&cache, d_mean.view())?;
    let stats = SurrogateStats {
        surrogate,
        entropy,
        approx_kl: kl / nf,
        clip_fraction: clipped as f64 / nf,
    };
    Ok((surrogate - entropy_coef * entropy, stats, ActorGrad { net, log_std: d_log_std }))
}

/// `mean_i (V(s_i) - R_i)^2`.
pub fn value_loss(critic: &NetParams, obs: ArrayView2<f64>, returns: ArrayView1<f64>) -> Result<(f64, GradTape), NetError> {
    let n = obs.nrows();
    if n == 0 {
        return Err(NetError::EmptyBatch);
    }
    let cache = critic.forward(obs)?;
    let v = cache.output().column(0);
    let diff = &v - &returns;
    let nf = n as f64;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / nf;
    let g = diff.mapv(|d| 2.0 * d / nf).insert_axis(Axis(1));
    Ok((loss, critic.backward(&cache, g.view())?))
}

/// Adam over a plain parameter vector (the state-independent log-std).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VecAdam {
    pub lr: f64,
    pub step_count: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl VecAdam {
    pub fn new(n: usize, lr: f64) -> Self {
        VecAdam {
            lr,
            step_count: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - f64::powi(b1, t);
        let c2 = 1.0 - f64::powi(b2, t);
        for i in 0..params.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + eps);
        }
    }
}

/// Joint clipping of the actor network gradient and the log-std gradient.
pub fn clip_actor_grad(g: &mut ActorGrad, max_norm: f64) -> f64 {
    let ls: f64 = g.log_std.iter().map(|v| v * v).sum();
    let total = (g.net.norm().powi(2) + ls).sqrt();
    if total > max_norm && total > 0.0 {
        let s = max_norm / total;
        g.net.scale(s);
        g.log_std.iter_mut().for_each(|v| *v *= s);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;
    use crate::net::{Activation, NetSpec};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn log_prob_of_standard_normal() {
        let lp = gaussian_log_prob(array![0.0].view(), &[0.0], array![0.0].view());
        assert!((lp + 0.5 * LN_2PI).abs() < 1e-15);
        assert!((gaussian_entropy(&[0.0]) - 0.5 * (LN_2PI + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn zero_advantage_only_entropy_moves_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let actor = NetParams::init(NetSpec::mlp(3, &[4], 2, Activation::Tanh), 1.0, &mut rng).unwrap();
        let obs = array![[0.1, 0.2, 0.3], [0.3, -0.1, 0.0]];
        let act = array![[0.5, -0.5], [0.0, 0.1]];
        let (_, _, g) = actor_loss(&actor, &[-1.0, -1.0], obs.view(), act.view(), array![-1.0, -2.0].view(), array![0.0, 0.0].view(), 0.2, 0.01).unwrap();
        assert_eq!(g.net.norm(), 0.0);
        assert_eq!(g.log_std, vec![-0.01, -0.01]);
    }

    #[test]
    fn clipped_branch_has_zero_gradient() {
        // identity actor with zero weights: mean 0
        let actor = NetParams::zeros(NetSpec::mlp(1, &[], 1, Activation::Tanh)).unwrap();
        let obs = array![[1.0]];
        let act = array![[0.0]];
        let logp = gaussian_log_prob(array![0.0].view(), &[0.0], act.row(0));
        // old log-prob chosen so the ratio is 1.5
        let old = logp - 1.5f64.ln();
        let (_, stats, g) = actor_loss(&actor, &[0.0], obs.view(), act.view(), array![old].view(), array![1.0].view(), 0.2, 0.0).unwrap();
        assert_eq!(stats.clip_fraction, 1.0);
        assert_eq!(g.net.norm(), 0.0);
        assert_eq!(g.log_std, vec![0.0]);
    }

    fn fd(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
        let h = 1e-6;
        let mut a = x.to_vec();
        a[i] += h;
        let up = f(&a);
        a[i] -= 2.0 * h;
        (up - f(&a)) / (2.0 * h)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn actor_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let actor = NetParams::init(NetSpec::mlp(3, &[5], 2, Activation::Tanh), 1.0, &mut rng).unwrap();
        let obs = Array2::from_shape_fn((6, 3), |_| rng.random_range(-1.0..1.0));
        let act = Array2::from_shape_fn((6, 2), |_| rng.random_range(-1.0..1.0));
        let adv = Array1::from_shape_fn(6, |_| rng.random_range(-1.0..1.0));
        let ls = vec![-0.5, -0.8];
        // old log-probs near the current ones so both branches occur
        let mean = actor.predict(obs.view()).unwrap();
        let old = Array1::from_shape_fn(6, |i| gaussian_log_prob(mean.row(i), &ls, act.row(i)) + rng.random_range(-0.4..0.4));
        let (_, _, g) = actor_loss(&actor, &ls, obs.view(), act.view(), old.view(), adv.view(), 0.2, 0.01).unwrap();
        let flat = actor.flat();
        let gf = g.net.flat();
        let loss_of = |p: &[f64], ls: &[f64]| {
            let mut a = actor.clone();
            a.set_flat(p).unwrap();
            actor_loss(&a, ls, obs.view(), act.view(), old.view(), adv.view(), 0.2, 0.01).unwrap().0
        };
        for i in 0..flat.len() {
            let f = |p: &[f64]| loss_of(p, &ls);
            assert!(rel(fd(&f, &flat, i), gf[i]) < 1e-4, "param {i}");
        }
        for j in 0..2 {
            let f = |l: &[f64]| loss_of(&flat, l);
            assert!(rel(fd(&f, &ls, j), g.log_std[j]) < 1e-4, "log_std {j}");
        }
    }

    #[test]
    fn value_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let critic = NetParams::init(NetSpec::mlp(3, &[5, 4], 1, Activation::Elu), 1.0, &mut rng).unwrap();
        let obs = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
        let ret = Array1::from_shape_fn(5, |_| rng.random_range(-1.0..1.0));
        let (_, g) = value_loss(&critic, obs.view(), ret.view()).unwrap();
        let flat = critic.flat();
        let gf = g.flat();
        let f = |p: &[f64]| {
            let mut c = critic.clone();
            c.set_flat(p).unwrap();
            value_loss(&c, obs.view(), ret.view()).unwrap().0
        };
        for i in 0..flat.len() {
            assert!(rel(fd(&f, &flat, i), gf[i]) < 1e-4, "param {i}");
        }
    }

    #[test]
    fn entropy_gradient_is_one_per_dim() {
        let ls = vec![0.3, -1.0];
        for j in 0..2 {
            let f = |l: &[f64]| gaussian_entropy(l);
            assert!(rel(fd(&f, &ls, j), 1.0) < 1e-6);
        }
    }

    #[test]
    fn vec_adam_descends() {
        let mut x = vec![3.0];
        let mut opt = VecAdam::new(1, 0.1);
        for _ in 0..500 {
            let g = vec![2.0 * x[0]];
            opt.step(&mut x, &g);
        }
        assert!(x[0].abs() < 1e-2);
    }
}
