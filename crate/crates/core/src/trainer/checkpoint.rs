//! Checkpoint directories: binary networks and optimizer moments plus a JSON
//! trainer state.
//!
//! ```text
//! config.txt                canonical run config
//! actor.net  actor.adam     policy mean network
//! critic.net critic.adam
//! disc.net   disc.adam
//! him.net    him.adam  him_target.net
//! state.json                iteration, log-std, RNG, envs, curiosity table
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{policy_inputs, Trainer, TrainError, VecAdam};
use crate::config::RunConfig;
use crate::curiosity::Curiosity;
use crate::him::HimEstimator;
use crate::net::{read_net, write_net, Adam, NetParams};
use crate::rng::RngState;
use crate::sim::{ObservationFrame, Walker, WalkerSnapshot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub iteration: usize,
    pub config_hash: String,
    pub log_std: Vec<f64>,
    pub log_std_adam: VecAdam,
    pub rng: RngState,
    pub envs: Vec<WalkerSnapshot>,
    pub episodes: Vec<u64>,
    pub command_timers: Vec<usize>,
    pub curiosity: Curiosity,
}

fn ck_err(path: &Path, msg: impl ToString) -> TrainError {
    TrainError::Checkpoint { path: path.display().to_string(), msg: msg.to_string() }
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<(), TrainError>) -> Result<(), TrainError> {
    let file = File::create(path).map_err(|e| ck_err(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush().map_err(|e| ck_err(path, e))?;
    Ok(())
}

fn save_net(dir: &Path, name: &str, p: &NetParams, adam: Option<&Adam>) -> Result<(), TrainError> {
    write_file(&dir.join(format!("{name}.net")), |w| Ok(write_net(w, p)?))?;
    if let Some(a) = adam {
        write_file(&dir.join(format!("{name}.adam")), |w| Ok(a.write(w)?))?;
    }
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>, TrainError> {
    Ok(BufReader::new(File::open(path).map_err(|e| ck_err(path, e))?))
}

fn load_net(dir: &Path, name: &str, expected: &NetParams) -> Result<NetParams, TrainError> {
    let path = dir.join(format!("{name}.net"));
    read_net(&mut open(&path)?, Some(&expected.spec)).map_err(|e| ck_err(&path, e))
}

fn load_adam(dir: &Path, name: &str, params: &NetParams) -> Result<Adam, TrainError> {
    let path = dir.join(format!("{name}.adam"));
    Adam::read(&mut open(&path)?, params).map_err(|e| ck_err(&path, e))
}

fn read_config(dir: &Path) -> Result<RunConfig, TrainError> {
    let path = dir.join("config.txt");
    let text = std::fs::read_to_string(&path).map_err(|e| ck_err(&path, e))?;
    RunConfig::from_text(&text, &path.display().to_string()).map_err(|e| ck_err(&path, e))
}

/// Writes every piece of trainer state needed for a bit-exact resume.
pub fn save_checkpoint(tr: &Trainer, dir: &Path) -> Result<(), TrainError> {
    std::fs::create_dir_all(dir).map_err(|e| ck_err(dir, e))?;
    std::fs::write(dir.join("config.txt"), tr.cfg.canonical_text()).map_err(|e| ck_err(dir, e))?;
    save_net(dir, "actor", &tr.agent.actor, Some(&tr.agent.actor_adam))?;
    save_net(dir, "critic", &tr.agent.critic, Some(&tr.agent.critic_adam))?;
    save_net(dir, "disc", &tr.disc.params, Some(&tr.disc.adam))?;
    save_net(dir, "him", &tr.him.encoder, Some(&tr.him.adam))?;
    save_net(dir, "him_target", &tr.him.target, None)?;
    let state = TrainerState {
        iteration: tr.iteration,
        config_hash: tr.cfg.hash(),
        log_std: tr.agent.log_std.clone(),
        log_std_adam: tr.agent.log_std_adam.clone(),
        rng: RngState::capture(&tr.rng),
        envs: tr.envs.iter().map(Walker::snapshot).collect(),
        episodes: tr.episodes.clone(),
        command_timers: tr.command_timers.clone(),
        curiosity: tr.curiosity.clone(),
    };
    let path = dir.join("state.json");
    write_file(&path, |w| serde_json::to_writer(w, &state).map_err(|e| ck_err(&path, e)))
}

fn read_state(dir: &Path) -> Result<TrainerState, TrainError> {
    let path = dir.join("state.json");
    serde_json::from_reader(open(&path)?).map_err(|e| ck_err(&path, e))
}

/// Rebuilds a trainer from a checkpoint directory.
pub fn load_checkpoint(dir: &Path) -> Result<Trainer, TrainError> {
    let cfg = read_config(dir)?;
    let state = read_state(dir)?;
    if state.config_hash != cfg.hash() {
        return Err(ck_err(dir, "config.txt does not match the stored config hash"));
    }
    let mut tr = Trainer::new(cfg)?;
    if state.envs.len() != tr.envs.len() {
        return Err(ck_err(dir, format!("{} env snapshots for {} envs", state.envs.len(), tr.envs.len())));
    }
    tr.agent.actor = load_net(dir, "actor", &tr.agent.actor)?;
    tr.agent.actor_adam = load_adam(dir, "actor", &tr.agent.actor)?;
    tr.agent.critic = load_net(dir, "critic", &tr.agent.critic)?;
    tr.agent.critic_adam = load_adam(dir, "critic", &tr.agent.critic)?;
    tr.disc.params = load_net(dir, "disc", &tr.disc.params)?;
    tr.disc.adam = load_adam(dir, "disc", &tr.disc.params)?;
    tr.him.encoder = load_net(dir, "him", &tr.him.encoder)?;
    tr.him.adam = load_adam(dir, "him", &tr.him.encoder)?;
    tr.him.target = load_net(dir, "him_target", &tr.him.target)?;
    if state.log_std.len() != tr.agent.log_std.len() {
        return Err(ck_err(dir, "log-std length mismatch"));
    }
    tr.agent.log_std = state.log_std;
    tr.agent.log_std_adam = state.log_std_adam;
    tr.rng = state.rng.restore();
    for (w, s) in tr.envs.iter_mut().zip(&state.envs) {
        w.restore(s);
    }
    tr.episodes = state.episodes;
    tr.command_timers = state.command_timers;
    tr.curiosity = state.curiosity;
    tr.iteration = state.iteration;
    Ok(tr)
}

/// Inference-only view of a checkpoint: deterministic (mean) actions.
#[derive(Debug, Clone)]
pub struct PolicyBundle {
    pub cfg: RunConfig,
    pub actor: NetParams,
    pub him: Option<HimEstimator>,
    pub iteration: usize,
}

impl PolicyBundle {
    pub fn load(dir: &Path) -> Result<Self, TrainError> {
        if !dir.is_dir() {
            return Err(ck_err(dir, "checkpoint directory not found"));
        }
        let cfg = read_config(dir)?;
        let state = read_state(dir)?;
        let ndof = cfg.morphology.num_dof();
        let obs_dim = ObservationFrame::dim(ndof);
        let mut rng = crate::rng::stream_rng(0, 0);
        let him = if cfg.train.use_him {
            let mut h = HimEstimator::new(obs_dim, cfg.him.clone(), &mut rng)?;
            let path = dir.join("him.net");
            if !path.exists() {
                return Err(ck_err(&path, "policy expects an estimator but him.net is missing"));
            }
            h.encoder = load_net(dir, "him", &h.encoder)?;
            Some(h)
        } else {
            None
        };
        let policy_in = obs_dim + him.as_ref().map_or(0, |h| h.output_dim());
        let spec = crate::net::NetSpec::mlp(policy_in, &cfg.train.actor_hidden, ndof, crate::net::Activation::Elu);
        let template = NetParams::zeros(spec)?;
        let actor = load_net(dir, "actor", &template)?;
        Ok(PolicyBundle { cfg, actor, him, iteration: state.iteration })
    }

    /// Mean joint targets for a batch of walkers.
    pub fn targets(&self, envs: &[Walker]) -> Result<Vec<Vec<f64>>, TrainError> {
        let obs_dim = ObservationFrame::dim(self.cfg.morphology.num_dof());
        let (pin, _) = policy_inputs(envs, self.him.as_ref(), obs_dim)?;
        let mean: Array2<f64> = self.actor.predict(pin.view())?;
        let scale = self.cfg.train.action_scale;
        Ok(envs
            .iter()
            .zip(mean.rows())
            .map(|(w, a)| w.nominal_pose().iter().zip(a).map(|(q, a)| q + scale * a).collect())
            .collect())
    }

    /// Estimator outputs (v_hat ⊕ z) for each walker's history.
    pub fn latents(&self, envs: &[Walker]) -> Result<Option<Array2<f64>>, TrainError> {
        let Some(h) = &self.him else { return Ok(None) };
        let obs_dim = ObservationFrame::dim(self.cfg.morphology.num_dof());
        let (_, hist) = policy_inputs(envs, None, obs_dim)?;
        let out = h.encode_batch(hist.view())?;
        let mut m = Array2::zeros((envs.len(), h.output_dim()));
        for (i, o) in out.iter().enumerate() {
            for (k, v) in o.to_vec().into_iter().enumerate() {
                m[[i, k]] = v;
            }
        }
        Ok(Some(m))
    }
}
