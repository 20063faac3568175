//! PPO training of the walker with style, curiosity and estimator terms.

mod agent;
mod checkpoint;
mod gae;
mod pointmass;
mod ppo;

pub use agent::{PpoAgent, PpoParams, PpoSamples, UpdateStats};
pub use checkpoint::{load_checkpoint, save_checkpoint, PolicyBundle, TrainerState};
pub use gae::{compute_gae, normalize_advantages};
pub use pointmass::{evaluate as evaluate_point_mass, train_point_mass, PointMass, PointMassReport, POINT_MASS_OBS};
pub use ppo::{actor_loss, gaussian_entropy, gaussian_log_prob, sample_action, value_loss, ActorGrad, SurrogateStats, VecAdam};

use ndarray::{s, Array1, Array2, Axis};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{Discriminator, StyleStats, STYLE_BINS};
use crate::config::RunConfig;
use crate::curiosity::{curiosity_feature_dim, curiosity_features, Curiosity, CuriosityError};
use crate::him::{HimError, HimEstimator, HimStats};
use crate::metrics::MetricValue;
use crate::motion::{style_feature_dim, MotionDataset, MotionError};
use crate::net::NetError;
use crate::sim::{Command, HiddenState, ObservationFrame, RewardBreakdown, SimError, SimState, Walker, REWARD_TERMS};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Him(#[from] HimError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Curiosity(#[from] CuriosityError),
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub iterations: usize,
    pub checkpoint_every: usize,
    /// Rollout threads; 1 is the reference single-worker mode.
    pub workers: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub num_envs: usize,
    pub horizon: usize,
    pub lr: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub init_log_std: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub use_him: bool,
    pub use_style: bool,
    pub use_curiosity: bool,
    /// Joint target = nominal pose + action_scale * action.
    pub action_scale: f64,
    pub command_min: f64,
    pub command_max: f64,
    pub command_resample_s: f64,
    /// Length of each generated reference clip, s.
    pub clip_duration_s: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            iterations: 1000,
            checkpoint_every: 100,
            workers: 1,
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            minibatches: 4,
            num_envs: 256,
            horizon: 24,
            lr: 3e-4,
            entropy_coef: 5e-3,
            max_grad_norm: 1.0,
            init_log_std: -1.0,
            actor_hidden: vec![256, 128, 64],
            critic_hidden: vec![256, 128, 64],
            use_him: true,
            use_style: true,
            use_curiosity: false,
            action_scale: 0.5,
            command_min: -0.5,
            command_max: 1.0,
            command_resample_s: 5.0,
            clip_duration_s: 4.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(format!("train.gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(format!("train.lambda must lie in [0, 1], got {}", self.lambda));
        }
        if !(self.clip > 0.0) {
            return Err(format!("train.clip must be > 0, got {}", self.clip));
        }
        if self.num_envs == 0 || self.horizon == 0 || self.epochs == 0 || self.minibatches == 0 || self.workers == 0 {
            return Err("train.num_envs, horizon, epochs, minibatches and workers must be >= 1".into());
        }
        if !(self.lr > 0.0) || !(self.max_grad_norm > 0.0) || !(self.entropy_coef >= 0.0) {
            return Err("train.lr and train.max_grad_norm must be > 0, train.entropy_coef >= 0".into());
        }
        if !(self.command_min <= self.command_max) {
            return Err(format!("train.command range [{}, {}] is inverted", self.command_min, self.command_max));
        }
        if !(self.action_scale > 0.0) || !(self.command_resample_s > 0.0) || !(self.clip_duration_s > 0.0) {
            return Err("train.action_scale, command_resample_s and clip_duration_s must be > 0".into());
        }
        if self.actor_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return Err("hidden widths must be positive".into());
        }
        Ok(())
    }

    pub fn ppo_params(&self) -> PpoParams {
        PpoParams {
            clip: self.clip,
            epochs: self.epochs,
            minibatches: self.minibatches,
            entropy_coef: self.entropy_coef,
            max_grad_norm: self.max_grad_norm,
        }
    }
}

/// Per-step reward components of one rollout, `[t][env]`.
#[derive(Debug, Clone)]
pub struct RolloutBatch {
    pub horizon: usize,
    pub num_envs: usize,
    pub policy_obs: Array2<f64>,
    pub critic_obs: Array2<f64>,
    pub histories: Array2<f64>,
    pub next_obs: Array2<f64>,
    pub true_velocity: Array2<f64>,
    pub actions: Array2<f64>,
    pub log_probs: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub last_values: Vec<f64>,
    pub task: Vec<Vec<RewardBreakdown>>,
    pub style: Vec<Vec<f64>>,
    pub curiosity: Vec<Vec<f64>>,
    pub total: Vec<Vec<f64>>,
    /// Reward used for GAE: `total` plus `γ V(s_T)` on timeouts.
    pub gae_reward: Vec<Vec<f64>>,
    pub dones: Vec<Vec<bool>>,
    pub falls: usize,
    pub faults: usize,
    /// Discriminator inputs of the policy's transitions, one row per step.
    pub transitions: Array2<f64>,
    pub commands: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
}

impl RolloutBatch {
    fn row(&self, t: usize, e: usize) -> usize {
        t * self.num_envs + e
    }
}

/// Ordered metric row for one iteration.
pub type MetricsRow = Vec<(String, MetricValue)>;

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over a simple combination
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub struct Trainer {
    pub cfg: RunConfig,
    pub dataset: MotionDataset,
    pub envs: Vec<Walker>,
    pub agent: PpoAgent,
    pub him: HimEstimator,
    pub disc: Discriminator,
    pub curiosity: Curiosity,
    pub rng: ChaCha8Rng,
    pub iteration: usize,
    pub episodes: Vec<u64>,
    pub command_timers: Vec<usize>,
    pool: Option<rayon::ThreadPool>,
}

impl Trainer {
    pub fn new(cfg: RunConfig) -> Result<Self, TrainError> {
        cfg.validate().map_err(TrainError::Config)?;
        let t = &cfg.train;
        let mut rng = ChaCha8Rng::seed_from_u64(t.seed);
        let ndof = cfg.morphology.num_dof();
        let obs_dim = ObservationFrame::dim(ndof);
        let mut envs = Vec::with_capacity(t.num_envs);
        for _ in 0..t.num_envs {
            envs.push(Walker::new(cfg.morphology.clone(), cfg.sim.clone(), cfg.randomization.clone())?);
        }
        let dataset = MotionDataset::default_set(&cfg.morphology, cfg.sim.control_dt(), t.clip_duration_s)?;
        let mut him_rng = crate::rng::stream_rng(t.seed, 1);
        let him = HimEstimator::new(obs_dim, cfg.him.clone(), &mut him_rng)?;
        let mut disc_rng = crate::rng::stream_rng(t.seed, 2);
        let disc = Discriminator::new(2 * style_feature_dim(ndof), cfg.adversary.clone(), &mut disc_rng)?;
        let mut cur_rng = crate::rng::stream_rng(t.seed, 3);
        let curiosity = Curiosity::new(curiosity_feature_dim(ndof), &cfg.curiosity, &mut cur_rng)?;
        let policy_in = obs_dim + if t.use_him { him.output_dim() } else { 0 };
        let critic_in = obs_dim + HiddenState::dim(ndof);
        let agent = PpoAgent::new(policy_in, critic_in, ndof, &t.actor_hidden, &t.critic_hidden, t.init_log_std, t.lr, &mut rng)?;
        let pool = if t.workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(t.workers)
                    .build()
                    .map_err(|e| TrainError::Config(e.to_string()))?,
            )
        } else {
            None
        };
        let mut tr = Trainer {
            episodes: vec![0; t.num_envs],
            command_timers: vec![0; t.num_envs],
            cfg,
            dataset,
            envs,
            agent,
            him,
            disc,
            curiosity,
            rng,
            iteration: 0,
            pool,
        };
        for e in 0..tr.envs.len() {
            tr.reset_env(e);
        }
        Ok(tr)
    }

    fn resample_steps(&self) -> usize {
        (self.cfg.train.command_resample_s / self.cfg.sim.control_dt()).round().max(1.0) as usize
    }

    fn draw_command<R: Rng + ?Sized>(&self, rng: &mut R) -> Command {
        let (lo, hi) = (self.cfg.train.command_min, self.cfg.train.command_max);
        Command::forward(if lo < hi { rng.random_range(lo..=hi) } else { lo })
    }

    fn resample_command(&mut self, e: usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.cfg.train.seed, e as u64 + 1, self.envs[e].control_step() ^ (self.episodes[e] << 32)));
        let cmd = self.draw_command(&mut rng);
        self.envs[e].set_command(cmd);
        self.command_timers[e] = self.resample_steps();
    }

    fn reset_env(&mut self, e: usize) {
        let seed = mix(self.cfg.train.seed, e as u64 + 1, self.episodes[e]);
        self.episodes[e] += 1;
        // command first, so the refilled history already carries it
        let cmd = self.draw_command(&mut ChaCha8Rng::seed_from_u64(mix(seed, 7, 0)));
        self.envs[e].set_command(cmd);
        self.command_timers[e] = self.resample_steps();
        self.envs[e].reset(seed);
    }

    pub fn obs_dim(&self) -> usize {
        ObservationFrame::dim(self.cfg.morphology.num_dof())
    }

    pub fn policy_input_dim(&self) -> usize {
        self.agent.actor.spec.input_width()
    }

    /// Policy inputs (observation, optionally ⊕ v_hat ⊕ z) for every env.
    pub fn policy_inputs(&self) -> Result<(Array2<f64>, Array2<f64>), TrainError> {
        policy_inputs(&self.envs, self.cfg.train.use_him.then_some(&self.him), self.obs_dim())
    }

    fn critic_inputs(&self) -> Array2<f64> {
        critic_matrix(self.envs.iter().map(|w| (w.latest_observation().clone(), w.state().clone())))
    }

    /// Runs `horizon` control steps in every env against the current networks.
    pub fn collect_rollouts(&mut self) -> Result<RolloutBatch, TrainError> {
        let t_len = self.cfg.train.horizon;
        let n = self.envs.len();
        let ndof = self.cfg.morphology.num_dof();
        let obs_dim = self.obs_dim();
        let hist_dim = obs_dim * self.cfg.him.history_len;
        let rows = n * t_len;
        let sfeat = style_feature_dim(ndof);
        let mut b = RolloutBatch {
            horizon: t_len,
            num_envs: n,
            policy_obs: Array2::zeros((rows, self.policy_input_dim())),
            critic_obs: Array2::zeros((rows, self.agent.critic.spec.input_width())),
            histories: Array2::zeros((rows, hist_dim)),
            next_obs: Array2::zeros((rows, obs_dim)),
            true_velocity: Array2::zeros((rows, 3)),
            actions: Array2::zeros((rows, ndof)),
            log_probs: Vec::with_capacity(rows),
            values: Vec::with_capacity(t_len),
            last_values: Vec::new(),
            task: Vec::with_capacity(t_len),
            style: vec![vec![0.0; n]; t_len],
            curiosity: vec![vec![0.0; n]; t_len],
            total: vec![vec![0.0; n]; t_len],
            gae_reward: vec![vec![0.0; n]; t_len],
            dones: vec![vec![false; n]; t_len],
            falls: 0,
            faults: 0,
            transitions: Array2::zeros((rows, 2 * sfeat)),
            commands: vec![vec![0.0; n]; t_len],
            velocities: vec![vec![0.0; n]; t_len],
        };
        let mut timeouts: Vec<(usize, usize, ObservationFrame, SimState)> = Vec::new();
        let weights = self.cfg.sim.reward_weights;
        let use_cur = self.cfg.train.use_curiosity;
        for t in 0..t_len {
            let (pin, hist) = self.policy_inputs()?;
            let cin = self.critic_inputs();
            let (actions, logp) = self.agent.act(&pin, &mut self.rng)?;
            b.values.push(self.agent.values(&cin)?);
            let r0 = t * n;
            b.policy_obs.slice_mut(s![r0..r0 + n, ..]).assign(&pin);
            b.critic_obs.slice_mut(s![r0..r0 + n, ..]).assign(&cin);
            b.histories.slice_mut(s![r0..r0 + n, ..]).assign(&hist);
            b.actions.slice_mut(s![r0..r0 + n, ..]).assign(&actions);
            b.log_probs.extend(logp);
            for (e, w) in self.envs.iter().enumerate() {
                let hs = HiddenState::from_state(w.state());
                for k in 0..3 {
                    b.true_velocity[[r0 + e, k]] = hs.base_lin_vel[k];
                }
                b.commands[t][e] = w.command().lin_vel[0];
            }
            let prev: Vec<SimState> = self.envs.iter().map(|w| w.state().clone()).collect();
            let targets: Vec<Vec<f64>> = self
                .envs
                .iter()
                .enumerate()
                .map(|(e, w)| {
                    w.nominal_pose()
                        .iter()
                        .zip(actions.row(e))
                        .map(|(q, a)| q + self.cfg.train.action_scale * a)
                        .collect()
                })
                .collect();
            let results = step_all(&mut self.envs, &targets, self.pool.as_ref());
            let mut task_row = Vec::with_capacity(n);
            for (e, res) in results.into_iter().enumerate() {
                let row = r0 + e;
                match res {
                    Ok(step) => {
                        let f0 = prev[e].style_features();
                        let f1 = step.state.style_features();
                        let mut tr = b.transitions.row_mut(row);
                        for (k, v) in f0.iter().chain(&f1).enumerate() {
                            tr[k] = *v;
                        }
                        for (k, v) in scaled_observation(&step.obs).into_iter().enumerate() {
                            b.next_obs[[row, k]] = v;
                        }
                        if use_cur {
                            b.curiosity[t][e] = self.curiosity.visit(&curiosity_features(&step.state))?;
                        }
                        b.velocities[t][e] = step.state.base_lin_vel[0];
                        if step.done {
                            b.dones[t][e] = true;
                            if step.fell {
                                b.falls += 1;
                            } else {
                                timeouts.push((t, e, step.obs.clone(), step.state.clone()));
                            }
                        }
                        task_row.push(step.rewards);
                    }
                    Err(_) => {
                        b.faults += 1;
                        b.dones[t][e] = true;
                        let f0 = prev[e].style_features();
                        let mut tr = b.transitions.row_mut(row);
                        for (k, v) in f0.iter().chain(&f0).enumerate() {
                            tr[k] = *v;
                        }
                        task_row.push(RewardBreakdown::zero(&weights));
                    }
                }
            }
            b.task.push(task_row);
            for e in 0..n {
                if b.dones[t][e] {
                    self.reset_env(e);
                } else {
                    self.command_timers[e] = self.command_timers[e].saturating_sub(1);
                    if self.command_timers[e] == 0 {
                        self.resample_command(e);
                    }
                }
            }
        }
        b.last_values = self.agent.values(&self.critic_inputs())?;

        if self.cfg.train.use_style {
            let rewards = self.disc.rewards(b.transitions.view())?;
            for t in 0..t_len {
                for e in 0..n {
                    b.style[t][e] = rewards[b.row(t, e)];
                }
            }
        }
        let ws = self.disc.cfg.style_weight;
        for t in 0..t_len {
            for e in 0..n {
                let mut total = b.task[t][e].total;
                if self.cfg.train.use_style {
                    total += ws * b.style[t][e];
                }
                if use_cur {
                    total += b.curiosity[t][e];
                }
                b.total[t][e] = total;
                b.gae_reward[t][e] = total;
            }
        }
        if !timeouts.is_empty() {
            let cin = critic_matrix(timeouts.iter().map(|(_, _, o, s)| (o.clone(), s.clone())));
            let v = self.agent.values(&cin)?;
            for ((t, e, _, _), v) in timeouts.iter().zip(v) {
                b.gae_reward[*t][*e] += self.cfg.train.gamma * v;
            }
        }
        Ok(b)
    }

    /// PPO, estimator and discriminator updates on one rollout.
    pub fn update(&mut self, b: &RolloutBatch) -> Result<MetricsRow, TrainError> {
        let tc = self.cfg.train.clone();
        let (adv, ret) = compute_gae(&b.gae_reward, &b.values, &b.dones, &b.last_values, tc.gamma, tc.lambda);
        let mut adv: Vec<f64> = adv.into_iter().flatten().collect();
        normalize_advantages(&mut adv);
        let samples = PpoSamples {
            policy_obs: b.policy_obs.clone(),
            critic_obs: b.critic_obs.clone(),
            actions: b.actions.clone(),
            log_probs: Array1::from(b.log_probs.clone()),
            advantages: Array1::from(adv),
            returns: Array1::from(ret.into_iter().flatten().collect::<Vec<_>>()),
        };
        let mut him_stats = HimStats::default();
        let mut him_steps = 0usize;
        let use_him = tc.use_him;
        let him = &mut self.him;
        let ppo = self.agent.update(&samples, &tc.ppo_params(), &mut self.rng, |idx| {
            if use_him {
                let h = b.histories.select(Axis(0), idx);
                let o = b.next_obs.select(Axis(0), idx);
                let v = b.true_velocity.select(Axis(0), idx);
                if idx.len() >= 2 {
                    let st = him.update(h.view(), o.view(), v.view(), tc.max_grad_norm).map_err(|e| match e {
                        HimError::Net(n) => n,
                        other => NetError::Checkpoint(other.to_string()),
                    })?;
                    him_stats.velocity_loss += st.velocity_loss;
                    him_stats.contrastive_loss += st.contrastive_loss;
                    him_stats.velocity_mae += st.velocity_mae;
                    him_steps += 1;
                }
            }
            Ok(())
        })?;
        if him_steps > 0 {
            let k = him_steps as f64;
            him_stats.velocity_loss /= k;
            him_stats.contrastive_loss /= k;
            him_stats.velocity_mae /= k;
        }

        let mut disc_loss = 0.0;
        let mut disc_real = 0.0;
        let mut disc_fake = 0.0;
        if tc.use_style {
            let k = self.disc.cfg.updates_per_iter;
            let bs = self.disc.cfg.batch_size;
            for _ in 0..k {
                let real_pairs = self.dataset.sample_transitions(bs, &mut self.rng);
                let width = self.disc.input_width();
                let mut real = Array2::zeros((bs, width));
                for (i, p) in real_pairs.iter().enumerate() {
                    real.row_mut(i).assign(&Array1::from(p.concat()));
                }
                let rows = b.transitions.nrows();
                let idx = sample_indices(&mut self.rng, rows, bs.min(rows)).into_vec();
                let fake = b.transitions.select(Axis(0), &idx);
                let st = self.disc.update(real.view(), fake.view(), &mut self.rng)?;
                disc_loss += st.loss / k as f64;
                disc_real += st.real_score / k as f64;
                disc_fake += st.fake_score / k as f64;
            }
        }
        self.iteration += 1;
        Ok(self.metrics_row(b, &ppo, &him_stats, [disc_loss, disc_real, disc_fake]))
    }

    pub fn iterate(&mut self) -> Result<MetricsRow, TrainError> {
        let b = self.collect_rollouts()?;
        self.update(&b)
    }

    fn metrics_row(&self, b: &RolloutBatch, ppo: &UpdateStats, him: &HimStats, disc: [f64; 3]) -> MetricsRow {
        let n = b.num_envs as f64;
        let steps = (b.num_envs * b.horizon) as f64;
        let task_return = b.task.iter().flatten().map(|r| r.total).sum::<f64>() / n;
        let mut term_sums = [0.0; 6];
        for r in b.task.iter().flatten() {
            for (k, term) in r.terms.iter().enumerate() {
                term_sums[k] += term.weighted;
            }
        }
        let lin_raw = b.task.iter().flatten().map(|r| r.terms[2].raw).sum::<f64>() / steps;
        let style: Vec<f64> = b.style.iter().flatten().copied().collect();
        let ss = StyleStats::from_rewards(if self.cfg.train.use_style { &style } else { &[] });
        let cur_mean = b.curiosity.iter().flatten().sum::<f64>() / steps;
        let track_err = b
            .commands
            .iter()
            .flatten()
            .zip(b.velocities.iter().flatten())
            .map(|(c, v)| (c - v).abs())
            .sum::<f64>()
            / steps;
        let f = |k: &str, v: f64| (k.to_string(), MetricValue::Float(v));
        let i = |k: &str, v: u64| (k.to_string(), MetricValue::Int(v as i64));
        let mut row = vec![i("iter", self.iteration as u64), f("task_return", task_return)];
        row.push(f("reward_total_mean", b.total.iter().flatten().sum::<f64>() / steps));
        for (k, name) in REWARD_TERMS.iter().enumerate() {
            row.push(f(&format!("term_{name}"), term_sums[k] / steps));
        }
        row.push(f("lin_track_raw", lin_raw));
        row.push(f("track_abs_err", track_err));
        row.push(f("style_mean", ss.mean));
        row.push(f("style_std", ss.std));
        for (k, c) in ss.hist.iter().enumerate() {
            row.push(i(&format!("style_bin_{k:02}"), *c));
        }
        debug_assert_eq!(ss.hist.len(), STYLE_BINS);
        row.push(f("curiosity_mean", cur_mean));
        row.push(i("curiosity_distinct", self.curiosity.table().distinct() as u64));
        row.push(i("curiosity_total", self.curiosity.table().total()));
        row.push(f("him_velocity_loss", him.velocity_loss));
        row.push(f("him_contrastive_loss", him.contrastive_loss));
        row.push(f("him_velocity_mae", him.velocity_mae));
        row.push(f("disc_loss", disc[0]));
        row.push(f("disc_real_score", disc[1]));
        row.push(f("disc_fake_score", disc[2]));
        row.push(f("surrogate", ppo.surrogate));
        row.push(f("value_loss", ppo.value_loss));
        row.push(f("entropy", ppo.entropy));
        row.push(f("approx_kl", ppo.approx_kl));
        row.push(f("clip_fraction", ppo.clip_fraction));
        row.push(i("episodes_ended", b.dones.iter().flatten().filter(|d| **d).count() as u64));
        row.push(i("falls", b.falls as u64));
        row.push(i("faults", b.faults as u64));
        row.push(i("skipped_updates", ppo.skipped as u64));
        row
    }
}

/// Metric column names in row order.
pub fn metrics_header() -> Vec<String> {
    let mut h: Vec<String> = ["iter", "task_return", "reward_total_mean"].iter().map(|s| s.to_string()).collect();
    h.extend(REWARD_TERMS.iter().map(|n| format!("term_{n}")));
    h.extend(["lin_track_raw", "track_abs_err", "style_mean", "style_std"].iter().map(|s| s.to_string()));
    h.extend((0..STYLE_BINS).map(|k| format!("style_bin_{k:02}")));
    h.extend(
        [
            "curiosity_mean",
            "curiosity_distinct",
            "curiosity_total",
            "him_velocity_loss",
            "him_contrastive_loss",
            "him_velocity_mae",
            "disc_loss",
            "disc_real_score",
            "disc_fake_score",
            "surrogate",
            "value_loss",
            "entropy",
            "approx_kl",
            "clip_fraction",
            "episodes_ended",
            "falls",
            "faults",
            "skipped_updates",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    h
}

fn step_all(envs: &mut [Walker], targets: &[Vec<f64>], pool: Option<&rayon::ThreadPool>) -> Vec<Result<crate::sim::StepResult, SimError>> {
    match pool {
        Some(p) => p.install(|| envs.par_iter_mut().zip(targets).map(|(w, a)| w.step(a)).collect()),
        None => envs.iter_mut().zip(targets).map(|(w, a)| w.step(a)).collect(),
    }
}

/// Network input scaling of one observation frame: commands and linear
/// velocities x2, angular rates x0.25, joint rates x0.05, angles as is.
pub fn scaled_observation(o: &ObservationFrame) -> Vec<f64> {
    let mut v = Vec::with_capacity(ObservationFrame::dim(o.dof_pos.len()));
    v.extend([o.command[0] * 2.0, o.command[1] * 2.0, o.command[2] * 0.25]);
    v.extend(o.base_ang_vel.iter().map(|w| w * 0.25));
    v.extend_from_slice(&o.base_rot_xy);
    v.extend_from_slice(&o.dof_pos);
    v.extend(o.dof_vel.iter().map(|w| w * 0.05));
    v.extend_from_slice(&o.last_action);
    v
}

fn scaled_hidden(s: &SimState) -> Vec<f64> {
    let h = HiddenState::from_state(s);
    let mut v = Vec::with_capacity(HiddenState::dim(h.dof_pos.len()));
    v.extend_from_slice(&h.dof_pos);
    v.extend(h.dof_vel.iter().map(|w| w * 0.05));
    v.extend(h.base_lin_vel.iter().map(|x| x * 2.0));
    v.extend(h.base_ang_vel.iter().map(|w| w * 0.25));
    v.push(h.base_height);
    v
}

fn critic_matrix(items: impl Iterator<Item = (ObservationFrame, SimState)>) -> Array2<f64> {
    let rows: Vec<Vec<f64>> = items
        .map(|(o, s)| {
            let mut v = scaled_observation(&o);
            v.extend(scaled_hidden(&s));
            v
        })
        .collect();
    let w = rows.first().map_or(0, |r| r.len());
    Array2::from_shape_vec((rows.len(), w), rows.into_iter().flatten().collect()).expect("critic rows")
}

/// Policy inputs and flattened histories for a set of walkers.
pub fn policy_inputs(envs: &[Walker], him: Option<&HimEstimator>, obs_dim: usize) -> Result<(Array2<f64>, Array2<f64>), TrainError> {
    let n = envs.len();
    let hist_len = envs.first().map_or(0, |w| w.history().count());
    let mut hist = Array2::zeros((n, obs_dim * hist_len));
    let mut obs = Array2::zeros((n, obs_dim));
    for (e, w) in envs.iter().enumerate() {
        let h: Vec<f64> = w.history().flat_map(scaled_observation).collect();
        hist.row_mut(e).assign(&Array1::from(h));
        obs.row_mut(e).assign(&Array1::from(scaled_observation(w.latest_observation())));
    }
    let pin = match him {
        Some(h) => {
            let out = h.encode_batch(hist.view())?;
            let extra = h.output_dim();
            let mut p = Array2::zeros((n, obs_dim + extra));
            p.slice_mut(s![.., ..obs_dim]).assign(&obs);
            for (e, o) in out.iter().enumerate() {
                for (k, v) in o.to_vec().into_iter().enumerate() {
                    p[[e, obs_dim + k]] = v;
                }
            }
            p
        }
        None => obs,
    };
    Ok((pin, hist))
}
