//! One-dimensional point mass that must match a commanded velocity. Used
//! as a fast sanity target for the PPO implementation.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::agent::{PpoAgent, PpoSamples};
use super::gae::{compute_gae, normalize_advantages};
use super::TrainConfig;
use crate::net::NetError;

pub const POINT_MASS_OBS: usize = 3;

#[derive(Debug, Clone)]
pub struct PointMass {
    pub velocity: f64,
    pub command: f64,
    pub steps: usize,
    pub episode_len: usize,
    rng: ChaCha8Rng,
}

impl PointMass {
    pub fn new(seed: u64) -> Self {
        let mut p = PointMass {
            velocity: 0.0,
            command: 0.0,
            steps: 0,
            episode_len: 50,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        p.reset();
        p
    }

    pub fn reset(&mut self) {
        self.velocity = self.rng.random_range(-1.0..1.0);
        self.command = self.rng.random_range(-1.0..1.0);
        self.steps = 0;
    }

    pub fn observe(&self) -> [f64; POINT_MASS_OBS] {
        [self.command, self.velocity, self.command - self.velocity]
    }

    /// Applies a clipped velocity change; returns `(lin-tracking reward, done)`.
    pub fn step(&mut self, action: f64) -> (f64, bool) {
        self.velocity += action.clamp(-1.0, 1.0);
        self.steps += 1;
        let e = self.command - self.velocity;
        let r = (-4.0 * e * e).exp();
        (r, self.steps >= self.episode_len)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointMassReport {
    /// Deterministic-policy mean tracking reward after each iteration.
    pub eval_reward: Vec<f64>,
    /// Stochastic rollout mean reward per iteration.
    pub rollout_reward: Vec<f64>,
}

impl PointMassReport {
    pub fn first_reaching(&self, threshold: f64) -> Option<usize> {
        self.eval_reward.iter().position(|&r| r >= threshold)
    }
}

fn obs_matrix(envs: &[PointMass]) -> Array2<f64> {
    Array2::from_shape_fn((envs.len(), POINT_MASS_OBS), |(i, j)| envs[i].observe()[j])
}

/// Mean tracking reward of the mean action over fresh episodes.
pub fn evaluate(agent: &PpoAgent, episodes: usize, seed: u64) -> Result<f64, NetError> {
    let mut envs: Vec<PointMass> = (0..episodes).map(|i| PointMass::new(seed.wrapping_mul(7919).wrapping_add(i as u64))).collect();
    let len = envs[0].episode_len;
    let mut total = 0.0;
    for _ in 0..len {
        let a = agent.mean_action(&obs_matrix(&envs))?;
        for (i, env) in envs.iter_mut().enumerate() {
            total += env.step(a[[i, 0]]).0;
        }
    }
    Ok(total / (episodes * len) as f64)
}

/// Trains with the PPO loop until the deterministic tracking reward reaches
/// `stop_at` or `max_iters` iterations pass.
pub fn train_point_mass(cfg: &TrainConfig, seed: u64, max_iters: usize, stop_at: Option<f64>) -> Result<PointMassReport, NetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent = PpoAgent::new(POINT_MASS_OBS, POINT_MASS_OBS, 1, &cfg.actor_hidden, &cfg.critic_hidden, cfg.init_log_std, cfg.lr, &mut rng)?;
    let mut envs: Vec<PointMass> = (0..cfg.num_envs).map(|i| PointMass::new(seed ^ ((i as u64 + 1) << 20))).collect();
    let ppo = cfg.ppo_params();
    let mut report = PointMassReport { eval_reward: Vec::new(), rollout_reward: Vec::new() };
    let (n, t_len) = (cfg.num_envs, cfg.horizon);
    for it in 0..max_iters {
        let mut obs_rows = Vec::with_capacity(n * t_len * POINT_MASS_OBS);
        let mut actions = Vec::with_capacity(n * t_len);
        let mut logps = Vec::with_capacity(n * t_len);
        let mut rewards = vec![vec![0.0; n]; t_len];
        let mut values = vec![vec![0.0; n]; t_len];
        let mut dones = vec![vec![false; n]; t_len];
        for t in 0..t_len {
            let obs = obs_matrix(&envs);
            let (a, lp) = agent.act(&obs, &mut rng)?;
            values[t] = agent.values(&obs)?;
            obs_rows.extend(obs.iter().copied());
            for (i, env) in envs.iter_mut().enumerate() {
                let (r, done) = env.step(a[[i, 0]]);
                rewards[t][i] = r;
                dones[t][i] = done;
                if done {
                    env.reset();
                }
            }
            actions.extend(a.iter().copied());
            logps.extend(lp);
        }
        let last = agent.values(&obs_matrix(&envs))?;
        let (adv, ret) = compute_gae(&rewards, &values, &dones, &last, cfg.gamma, cfg.lambda);
        let mut adv_flat: Vec<f64> = adv.into_iter().flatten().collect();
        normalize_advantages(&mut adv_flat);
        let obs = Array2::from_shape_vec((n * t_len, POINT_MASS_OBS), obs_rows).expect("rollout shape");
        let samples = PpoSamples {
            critic_obs: obs.clone(),
            policy_obs: obs,
            actions: Array2::from_shape_vec((n * t_len, 1), actions).expect("rollout shape"),
            log_probs: logps.into(),
            advantages: adv_flat.into(),
            returns: ret.into_iter().flatten().collect::<Vec<_>>().into(),
        };
        agent.update(&samples, &ppo, &mut rng, |_| Ok(()))?;
        report.rollout_reward.push(rewards.iter().flatten().sum::<f64>() / (n * t_len) as f64);
        let eval = evaluate(&agent, 64, seed.wrapping_add(it as u64))?;
        report.eval_reward.push(eval);
        if stop_at.is_some_and(|s| eval >= s) {
            break;
        }
    }
    Ok(report)
}
