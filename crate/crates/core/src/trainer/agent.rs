use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use super::ppo::{actor_loss, clip_actor_grad, sample_action, gaussian_log_prob, value_loss, VecAdam};
use crate::net::{Activation, Adam, NetError, NetParams, NetSpec};

/// PPO hyperparameters shared by every environment the agent is trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoParams {
    pub clip: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
}

/// One iteration's training samples, flattened over envs and time.
#[derive(Debug, Clone)]
pub struct PpoSamples {
    pub policy_obs: Array2<f64>,
    pub critic_obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub log_probs: Array1<f64>,
    pub advantages: Array1<f64>,
    pub returns: Array1<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateStats {
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Minibatch steps skipped because of non-finite losses or gradients.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoAgent {
    pub actor: NetParams,
    pub critic: NetParams,
    pub log_std: Vec<f64>,
    pub actor_adam: Adam,
    pub critic_adam: Adam,
    pub log_std_adam: VecAdam,
}

impl PpoAgent {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        policy_in: usize,
        critic_in: usize,
        action_dim: usize,
        actor_hidden: &[usize],
        critic_hidden: &[usize],
        init_log_std: f64,
        lr: f64,
        rng: &mut R,
    ) -> Result<Self, NetError> {
        let actor = NetParams::init(NetSpec::mlp(policy_in, actor_hidden, action_dim, Activation::Elu), 0.01, rng)?;
        let critic = NetParams::init(NetSpec::mlp(critic_in, critic_hidden, 1, Activation::Elu), 1.0, rng)?;
        Ok(PpoAgent {
            actor_adam: Adam::new(&actor, lr),
            critic_adam: Adam::new(&critic, lr),
            log_std_adam: VecAdam::new(action_dim, lr),
            log_std: vec![init_log_std; action_dim],
            actor,
            critic,
        })
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    /// Sampled actions and their log-probabilities for a batch of inputs.
    pub fn act<R: Rng + ?Sized>(&self, policy_obs: &Array2<f64>, rng: &mut R) -> Result<(Array2<f64>, Vec<f64>), NetError> {
        let mean = self.actor.predict(policy_obs.view())?;
        let mut actions = Array2::zeros(mean.dim());
        let mut logp = Vec::with_capacity(mean.nrows());
        for (i, m) in mean.axis_iter(Axis(0)).enumerate() {
            let a = sample_action(m, &self.log_std, rng);
            logp.push(gaussian_log_prob(m, &self.log_std, ndarray::ArrayView1::from(&a)));
            actions.row_mut(i).assign(&Array1::from(a));
        }
        Ok((actions, logp))
    }

    pub fn mean_action(&self, policy_obs: &Array2<f64>) -> Result<Array2<f64>, NetError> {
        self.actor.predict(policy_obs.view())
    }

    pub fn values(&self, critic_obs: &Array2<f64>) -> Result<Vec<f64>, NetError> {
        Ok(self.critic.predict(critic_obs.view())?.column(0).to_vec())
    }

    /// Clipped-surrogate and value updates over shuffled minibatches.
    /// `on_minibatch` sees each minibatch's row indices, so auxiliary models
    /// can train on the same partition.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        s: &PpoSamples,
        p: &PpoParams,
        rng: &mut R,
        mut on_minibatch: impl FnMut(&[usize]) -> Result<(), NetError>,
    ) -> Result<UpdateStats, NetError> {
        let n = s.actions.nrows();
        let mut idx: Vec<usize> = (0..n).collect();
        let mb = n.div_ceil(p.minibatches.max(1));
        let mut stats = UpdateStats::default();
        let mut steps = 0usize;
        for _ in 0..p.epochs {
            idx.shuffle(rng);
            for chunk in idx.chunks(mb) {
                let obs = s.policy_obs.select(Axis(0), chunk);
                let cobs = s.critic_obs.select(Axis(0), chunk);
                let act = s.actions.select(Axis(0), chunk);
                let old = s.log_probs.select(Axis(0), chunk);
                let adv = s.advantages.select(Axis(0), chunk);
                let ret = s.returns.select(Axis(0), chunk);
                let (aloss, st, mut ag) = actor_loss(&self.actor, &self.log_std, obs.view(), act.view(), old.view(), adv.view(), p.clip, p.entropy_coef)?;
                let (vloss, mut vg) = value_loss(&self.critic, cobs.view(), ret.view())?;
                let finite = aloss.is_finite() && vloss.is_finite() && ag.net.is_finite() && vg.is_finite() && ag.log_std.iter().all(|g| g.is_finite());
                if !finite {
                    stats.skipped += 1;
                    continue;
                }
                clip_actor_grad(&mut ag, p.max_grad_norm);
                vg.clip_norm(p.max_grad_norm);
                self.actor_adam.step(&mut self.actor, &ag.net)?;
                self.log_std_adam.step(&mut self.log_std, &ag.log_std);
                self.critic_adam.step(&mut self.critic, &vg)?;
                on_minibatch(chunk)?;
                stats.surrogate += st.surrogate;
                stats.value_loss += vloss;
                stats.entropy += st.entropy;
                stats.approx_kl += st.approx_kl;
                stats.clip_fraction += st.clip_fraction;
                steps += 1;
            }
        }
        if steps > 0 {
            let k = steps as f64;
            stats.surrogate /= k;
            stats.value_loss /= k;
            stats.entropy /= k;
            stats.approx_kl /= k;
            stats.clip_fraction /= k;
        }
        Ok(stats)
    }
}
