use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dynamics::Multibody;
use super::observation::{observe, ObservationFrame};
use super::randomization::{RandomizationDraw, RandomizationRanges};
use super::reward::{task_rewards, RewardBreakdown, RewardParams};
use super::{Command, RobotMorphology, SimConfig, SimError, SimState};
use crate::rng::RngState;

/// Adds velocity impulses to the base.
pub fn apply_push(state: &SimState, push_lin: f64, push_ang: f64) -> SimState {
    let mut s = state.clone();
    s.base_lin_vel[0] += push_lin;
    s.base_pitch_rate += push_ang;
    s
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub state: SimState,
    pub obs: ObservationFrame,
    pub rewards: RewardBreakdown,
    pub done: bool,
    pub fell: bool,
    pub timed_out: bool,
}

/// Serializable episode state, enough to resume a walker bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkerSnapshot {
    pub draw: RandomizationDraw,
    pub state: SimState,
    pub prev_state: SimState,
    pub command: Command,
    pub rng: RngState,
    pub target: Vec<f64>,
    pub pending: Vec<(u64, Vec<f64>)>,
    pub substep: u64,
    pub control_step: u64,
    pub actions: [Vec<f64>; 3],
    pub history: Vec<ObservationFrame>,
    pub next_push: f64,
}

/// One biped environment instance with its own RNG stream.
#[derive(Debug, Clone)]
pub struct Walker {
    morph: RobotMorphology,
    cfg: SimConfig,
    ranges: RandomizationRanges,
    body: Multibody,
    nominal: Vec<f64>,
    reward_params: RewardParams,
    draw: RandomizationDraw,
    state: SimState,
    prev_state: SimState,
    command: Command,
    rng: ChaCha8Rng,
    target: Vec<f64>,
    pending: VecDeque<(u64, Vec<f64>)>,
    substep: u64,
    control_step: u64,
    /// `[a_t, a_{t-1}, a_{t-2}]`
    actions: [Vec<f64>; 3],
    history: VecDeque<ObservationFrame>,
    next_push: f64,
}

impl Walker {
    pub fn new(morph: RobotMorphology, cfg: SimConfig, ranges: RandomizationRanges) -> Result<Self, SimError> {
        morph.validate()?;
        cfg.validate()?;
        ranges.validate()?;
        let nominal = morph.nominal_pose()?;
        let body = Multibody::new(&morph, 0.0, 0.0);
        let reward_params = RewardParams {
            weights: cfg.reward_weights,
            f_max: cfg.f_max_body_weights * morph.total_mass() * cfg.gravity.abs(),
            control_dt: cfg.control_dt(),
        };
        let nd = morph.num_dof();
        let draw = RandomizationRanges::nominal().sample(&mut ChaCha8Rng::seed_from_u64(0));
        let mut w = Walker {
            morph,
            cfg,
            ranges,
            body,
            nominal: nominal.clone(),
            reward_params,
            draw,
            state: SimState::zeroed(nd),
            prev_state: SimState::zeroed(nd),
            command: Command::default(),
            rng: ChaCha8Rng::seed_from_u64(0),
            target: nominal.clone(),
            pending: VecDeque::new(),
            substep: 0,
            control_step: 0,
            actions: [nominal.clone(), nominal.clone(), nominal],
            history: VecDeque::new(),
            next_push: 0.0,
        };
        w.reset(0);
        Ok(w)
    }

    pub fn morphology(&self) -> &RobotMorphology {
        &self.morph
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn num_dof(&self) -> usize {
        self.morph.num_dof()
    }

    pub fn nominal_pose(&self) -> &[f64] {
        &self.nominal
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn draw(&self) -> &RandomizationDraw {
        &self.draw
    }

    pub fn command(&self) -> Command {
        self.command
    }

    pub fn set_command(&mut self, cmd: Command) {
        self.command = cmd;
    }

    pub fn reward_params(&self) -> &RewardParams {
        &self.reward_params
    }

    /// Joint target currently driving the PD loop (after the delay line).
    pub fn active_target(&self) -> &[f64] {
        &self.target
    }

    pub fn control_step(&self) -> u64 {
        self.control_step
    }

    /// Observation history, oldest first.
    pub fn history(&self) -> impl Iterator<Item = &ObservationFrame> {
        self.history.iter()
    }

    /// History frames concatenated oldest first.
    pub fn history_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.history.len() * ObservationFrame::dim(self.num_dof()));
        for f in &self.history {
            f.write_into(&mut v);
        }
        v
    }

    pub fn latest_observation(&self) -> &ObservationFrame {
        self.history.back().expect("history filled at reset")
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn set_randomization(&mut self, ranges: RandomizationRanges) -> Result<(), SimError> {
        ranges.validate()?;
        self.ranges = ranges;
        Ok(())
    }

    pub fn total_energy(&self) -> f64 {
        let q = self.state.q();
        self.body.kinetic_energy(&q, &self.state.qd()) + self.body.potential_energy(&q, self.cfg.gravity)
    }

    /// Places the robot at a configuration with zero velocity, e.g. in the
    /// air for free-flight tests. Contact bookkeeping is cleared.
    pub fn set_configuration(&mut self, q: &[f64], qd: &[f64]) {
        self.state.set_coords(q, qd);
        self.state.contact_anchor = [None; 2];
        self.refresh_feet();
        self.prev_state = self.state.clone();
    }

    /// Starts a new episode: new randomization draw, perturbed nominal
    /// stance with both feet on the ground, history refilled.
    pub fn reset(&mut self, seed: u64) -> (SimState, ObservationFrame) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.draw = self.ranges.sample(&mut self.rng);
        let dm = self.draw.applied_mass_delta(self.morph.torso_mass, self.ranges.base_mass_reference);
        self.body = Multibody::new(&self.morph, dm, self.draw.com_shift);

        let nd = self.num_dof();
        let noise = self.cfg.init_noise;
        let mut q = vec![0.0; 3 + nd];
        q[2] = if noise > 0.0 { self.rng.random_range(-noise..=noise) } else { 0.0 };
        for j in 0..nd {
            let (lo, hi) = self.morph.limit(j);
            let jitter = if noise > 0.0 { self.rng.random_range(-noise..=noise) } else { 0.0 };
            q[3 + j] = (self.nominal[j] + jitter).clamp(lo, hi);
        }
        // lower the hip until the lowest foot touches the ground
        let qd = vec![0.0; 3 + nd];
        let feet = self.body.feet(&q, &qd);
        q[1] = feet
            .iter()
            .map(|f| self.cfg.terrain.height(f.pos[0]) - f.pos[1])
            .fold(f64::NEG_INFINITY, f64::max);

        let mut state = SimState::zeroed(nd);
        state.set_coords(&q, &qd);
        self.state = state;
        self.refresh_feet();
        self.prev_state = self.state.clone();

        self.target = self.nominal.clone();
        self.pending.clear();
        self.substep = 0;
        self.control_step = 0;
        self.actions = [self.nominal.clone(), self.nominal.clone(), self.nominal.clone()];
        self.next_push = self.cfg.push_interval_s;

        let obs = observe(&self.state, &self.command, &self.actions[0], &self.cfg.noise, &mut self.rng);
        self.history.clear();
        for _ in 0..self.cfg.history_len {
            self.history.push_back(obs.clone());
        }
        (self.state.clone(), obs)
    }

    fn refresh_feet(&mut self) {
        let feet = self.body.feet(&self.state.q(), &self.state.qd());
        for (side, f) in feet.iter().enumerate() {
            self.state.foot_pos[side] = f.pos;
            self.state.foot_vel[side] = f.vel;
        }
    }

    fn delay_substeps(&self) -> u64 {
        (self.draw.action_delay * 1e-3 / self.cfg.physics_dt).round() as u64
    }

    /// Spring-damper normal force and stick-slip friction at each foot.
    fn contact_forces(&mut self, q: &[f64], qd: &[f64]) -> [[f64; 2]; 2] {
        let feet = self.body.feet(q, qd);
        let k = self.cfg.contact_stiffness;
        let c = self.cfg.contact_damping;
        let mu = self.draw.friction_coeff;
        let mut forces = [[0.0; 2]; 2];
        for (side, f) in feet.iter().enumerate() {
            let pen = self.cfg.terrain.height(f.pos[0]) - f.pos[1];
            if pen <= 0.0 {
                self.state.contact_anchor[side] = None;
                continue;
            }
            let normal = (k * pen - c * f.vel[1]).max(0.0);
            let anchor = self.state.contact_anchor[side].unwrap_or(f.pos[0]);
            let mut tangential = -k * (f.pos[0] - anchor) - c * f.vel[0];
            let limit = mu * normal;
            let anchor = if tangential.abs() > limit {
                tangential = limit.copysign(tangential);
                f.pos[0] + (tangential + c * f.vel[0]) / k
            } else {
                anchor
            };
            self.state.contact_anchor[side] = Some(anchor);
            forces[side] = [tangential, normal];
        }
        forces
    }

    /// Advances one control period with `action` as joint position targets.
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult, SimError> {
        let nd = self.num_dof();
        if action.len() != nd {
            return Err(SimError::ActionDim { expected: nd, got: action.len() });
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(SimError::NonFiniteAction);
        }
        let applied: Vec<f64> = action
            .iter()
            .enumerate()
            .map(|(j, &a)| {
                let (lo, hi) = self.morph.limit(j);
                a.clamp(lo, hi)
            })
            .collect();
        self.prev_state = self.state.clone();
        self.pending.push_back((self.substep + self.delay_substeps(), applied.clone()));

        let dt = self.cfg.physics_dt;
        let (kpf, kdf, ms) = (self.draw.kp_factor, self.draw.kd_factor, self.draw.motor_strength_factor);
        let nj = self.morph.joints_per_leg();
        let mut q = self.state.q();
        let mut qd = self.state.qd();
        let mut tau = vec![0.0; nd];
        let mut forces = [[0.0; 2]; 2];
        for _ in 0..self.cfg.decimation {
            while self.pending.front().is_some_and(|(at, _)| *at <= self.substep) {
                self.target = self.pending.pop_front().unwrap().1;
            }
            for j in 0..nd {
                let l = j % nj;
                let limit = ms * self.morph.torque_limit[l];
                let t = kpf * self.morph.pd_kp[l] * (self.target[j] - q[3 + j]) - kdf * self.morph.pd_kd[l] * qd[3 + j];
                tau[j] = t.clamp(-limit, limit);
            }
            forces = self.contact_forces(&q, &qd);
            let acc = self
                .body
                .accelerations(&q, &qd, &tau, forces, self.cfg.gravity)
                .filter(|a| a.iter().all(|v| v.is_finite()))
                .ok_or(SimError::Diverged { time: self.state.time })?;
            for i in 0..q.len() {
                qd[i] += dt * acc[i];
                q[i] += dt * qd[i];
            }
            self.substep += 1;
        }
        self.state.set_coords(&q, &qd);
        self.state.time = self.substep as f64 * dt;
        if !self.state.is_finite() {
            return Err(SimError::Diverged { time: self.state.time });
        }
        for side in 0..2 {
            self.state.foot_force[side] = forces[side];
            self.state.foot_contact[side] = forces[side][1] > 0.0;
        }
        self.control_step += 1;

        if self.cfg.push_interval_s > 0.0 && self.state.time + 1e-9 >= self.next_push {
            self.draw.push_lin = self.ranges.push_lin.sample(&mut self.rng);
            self.draw.push_ang = self.ranges.push_ang.sample(&mut self.rng);
            self.state = apply_push(&self.state, self.draw.push_lin, self.draw.push_ang);
            self.next_push += self.cfg.push_interval_s;
        }
        self.refresh_feet();

        self.actions.rotate_right(1);
        self.actions[0] = applied;
        let obs = observe(&self.state, &self.command, &self.actions[0], &self.cfg.noise, &mut self.rng);
        self.history.pop_front();
        self.history.push_back(obs.clone());

        let rewards = task_rewards(
            &self.state,
            &self.prev_state,
            &self.command,
            [&self.actions[0], &self.actions[1], &self.actions[2]],
            &self.reward_params,
        );
        let fell = self.state.base_height() < self.cfg.fall_height || self.state.base_pitch.abs() > self.cfg.fall_pitch;
        let max_steps = (self.cfg.episode_length_s / self.cfg.control_dt()).round() as u64;
        let timed_out = self.control_step >= max_steps;
        Ok(StepResult {
            state: self.state.clone(),
            obs,
            rewards,
            done: fell || timed_out,
            fell,
            timed_out,
        })
    }

    pub fn snapshot(&self) -> WalkerSnapshot {
        WalkerSnapshot {
            draw: self.draw.clone(),
            state: self.state.clone(),
            prev_state: self.prev_state.clone(),
            command: self.command,
            rng: RngState::capture(&self.rng),
            target: self.target.clone(),
            pending: self.pending.iter().cloned().collect(),
            substep: self.substep,
            control_step: self.control_step,
            actions: self.actions.clone(),
            history: self.history.iter().cloned().collect(),
            next_push: self.next_push,
        }
    }

    pub fn restore(&mut self, snap: &WalkerSnapshot) {
        self.draw = snap.draw.clone();
        let dm = self.draw.applied_mass_delta(self.morph.torso_mass, self.ranges.base_mass_reference);
        self.body = Multibody::new(&self.morph, dm, self.draw.com_shift);
        self.state = snap.state.clone();
        self.prev_state = snap.prev_state.clone();
        self.command = snap.command;
        self.rng = snap.rng.restore();
        self.target = snap.target.clone();
        self.pending = snap.pending.iter().cloned().collect();
        self.substep = snap.substep;
        self.control_step = snap.control_step;
        self.actions = snap.actions.clone();
        self.history = snap.history.iter().cloned().collect();
        self.next_push = snap.next_push;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{NoiseLevels, Range};

    fn quiet_cfg() -> SimConfig {
        SimConfig {
            noise: NoiseLevels { scale: 0.0, ..Default::default() },
            push_interval_s: 0.0,
            ..SimConfig::default()
        }
    }

    fn walker(ranges: RandomizationRanges) -> Walker {
        Walker::new(RobotMorphology::default(), quiet_cfg(), ranges).unwrap()
    }

    #[test]
    fn reset_is_deterministic() {
        let mut w = Walker::new(RobotMorphology::default(), SimConfig::default(), RandomizationRanges::default()).unwrap();
        let (a, oa) = w.reset(42);
        let (b, ob) = w.reset(42);
        assert_eq!(a, b);
        assert_eq!(oa, ob);
        let (c, _) = w.reset(43);
        assert_ne!(a, c);
    }

    #[test]
    fn reset_fills_history_and_touches_ground() {
        let mut w = walker(RandomizationRanges::nominal());
        let (s, o) = w.reset(1);
        assert_eq!(w.history().count(), 6);
        assert!(w.history().all(|f| *f == o));
        let lowest = s.foot_pos[0][1].min(s.foot_pos[1][1]);
        assert!(lowest.abs() < 1e-12);
    }

    #[test]
    fn collapsed_ranges_reproduce_the_point() {
        let mut r = RandomizationRanges::nominal();
        r.friction = Range::point(0.7);
        r.action_delay = Range::point(40.0);
        let mut w = walker(r);
        w.reset(9);
        assert_eq!(w.draw().friction_coeff, 0.7);
        assert_eq!(w.draw().action_delay, 40.0);
    }

    #[test]
    fn bad_actions_rejected() {
        let mut w = walker(RandomizationRanges::nominal());
        assert!(matches!(w.step(&[0.0; 3]), Err(SimError::ActionDim { .. })));
        assert!(matches!(w.step(&[0.0, f64::NAN, 0.0, 0.0]), Err(SimError::NonFiniteAction)));
    }

    #[test]
    fn out_of_limit_action_is_clipped() {
        let mut w = walker(RandomizationRanges::nominal());
        w.step(&[5.0, 5.0, -5.0, -5.0]).unwrap();
        assert_eq!(w.active_target(), &[1.2, 2.4, -1.2, -0.05]);
    }

    #[test]
    fn stands_with_constant_target() {
        let mut w = walker(RandomizationRanges::nominal());
        let (s0, _) = w.reset(3);
        let h0 = s0.base_height();
        let pose = w.nominal_pose().to_vec();
        for _ in 0..100 {
            let r = w.step(&pose).unwrap();
            let h = r.state.base_height();
            assert!((h - h0).abs() <= 0.1 * h0, "height {h} vs {h0}");
            assert!(!r.fell);
        }
    }

    #[test]
    fn delay_line_shifts_action_by_whole_control_steps() {
        let mut r = RandomizationRanges::nominal();
        r.action_delay = Range::point(60.0);
        let mut w = walker(r);
        w.reset(0);
        let nominal = w.nominal_pose().to_vec();
        let mut probe = nominal.clone();
        probe[0] += 0.1;
        w.step(&probe).unwrap();
        for _ in 0..2 {
            assert_eq!(w.active_target(), nominal.as_slice());
            w.step(&nominal).unwrap();
        }
        // third step after issue: the probe becomes active on its first substep
        w.step(&nominal).unwrap();
        // the probe was active during step 3 but replaced in the same step by nothing newer
        assert_eq!(w.active_target(), probe.as_slice());
        w.step(&nominal).unwrap();
        assert_eq!(w.active_target(), nominal.as_slice());
    }

    #[test]
    fn zero_gravity_zero_torque_is_equilibrium() {
        let mut m = RobotMorphology::default();
        m.pd_kp = vec![0.0; 2];
        m.pd_kd = vec![0.0; 2];
        let cfg = SimConfig { gravity: 0.0, ..quiet_cfg() };
        let mut w = Walker::new(m, cfg, RandomizationRanges::nominal()).unwrap();
        w.reset(0);
        let mut q = w.state().q();
        q[1] += 1.0;
        w.set_configuration(&q, &vec![0.0; 7]);
        let before = w.state().clone();
        let r = w.step(&w.nominal_pose().to_vec()).unwrap();
        assert_eq!(r.state.q(), before.q());
        assert_eq!(r.state.qd(), before.qd());
        assert_eq!(r.state.foot_contact, [false, false]);
    }

    #[test]
    fn free_flight_energy_does_not_grow() {
        let mut m = RobotMorphology::default();
        m.pd_kp = vec![0.0; 2];
        m.pd_kd = vec![0.0; 2];
        let cfg = SimConfig { decimation: 1, ..quiet_cfg() };
        let mut w = Walker::new(m, cfg, RandomizationRanges::nominal()).unwrap();
        w.reset(0);
        let mut q = w.state().q();
        q[1] += 5.0;
        w.set_configuration(&q, &[0.3, 1.0, 0.2, 0.5, -0.4, 0.3, 0.6]);
        let mut e = w.total_energy();
        let pose = w.nominal_pose().to_vec();
        for _ in 0..400 {
            w.step(&pose).unwrap();
            let e1 = w.total_energy();
            assert!(e1 - e <= 1e-6, "energy rose by {}", e1 - e);
            e = e1;
        }
    }

    #[test]
    fn snapshot_restores_exactly() {
        let mut w = Walker::new(RobotMorphology::default(), SimConfig::default(), RandomizationRanges::default()).unwrap();
        w.reset(5);
        let pose = w.nominal_pose().to_vec();
        for _ in 0..10 {
            w.step(&pose).unwrap();
        }
        let snap = w.snapshot();
        let a: Vec<_> = (0..10).map(|_| w.step(&pose).unwrap().state).collect();
        w.reset(77);
        w.restore(&snap);
        let b: Vec<_> = (0..10).map(|_| w.step(&pose).unwrap().state).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn push_adds_velocity() {
        let s = SimState::zeroed(4);
        assert_eq!(apply_push(&s, 0.0, 0.0), s);
        let p = apply_push(&s, 0.6, 0.0);
        assert_eq!(p.base_lin_vel[0], 0.6);
        let twice = apply_push(&apply_push(&s, 0.3, 0.0), 0.3, 0.0);
        assert!((twice.base_lin_vel[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn friction_cone_holds_while_walking_in_place() {
        let mut w = Walker::new(RobotMorphology::default(), quiet_cfg(), RandomizationRanges::default()).unwrap();
        w.reset(11);
        let nominal = w.nominal_pose().to_vec();
        for t in 0..200 {
            let phase = t as f64 * 0.02 * std::f64::consts::TAU;
            let mut a = nominal.clone();
            a[1] += 0.3 * phase.sin().max(0.0);
            a[3] += 0.3 * (-phase.sin()).max(0.0);
            let r = match w.step(&a) {
                Ok(r) => r,
                Err(e) => panic!("{e}"),
            };
            let mu = w.draw().friction_coeff;
            for side in 0..2 {
                let [ft, fnorm] = r.state.foot_force[side];
                assert!(fnorm >= 0.0);
                assert!(ft.abs() <= mu * fnorm + 1e-9);
                assert_eq!(r.state.foot_contact[side], fnorm > 0.0);
            }
            if r.done {
                w.reset(t);
            }
        }
    }
}
