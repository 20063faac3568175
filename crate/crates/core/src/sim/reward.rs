use serde::{Deserialize, Serialize};

use super::{Command, SimState};

pub const REWARD_TERMS: [&str; 6] = [
    "feet_slip",
    "contact_forces",
    "lin_vel_tracking",
    "ang_vel_tracking",
    "root_accel",
    "smoothness",
];

/// Task reward scales, in `REWARD_TERMS` order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights(pub [f64; 6]);

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights([-0.05, -0.01, 2.4, 1.1, 0.2, -0.01])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardTerm {
    pub name: &'static str,
    pub raw: f64,
    pub weight: f64,
    pub weighted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardBreakdown {
    pub terms: [RewardTerm; 6],
    pub total: f64,
}

impl RewardBreakdown {
    pub fn from_raw(raw: [f64; 6], weights: &RewardWeights) -> Self {
        let terms: [RewardTerm; 6] = std::array::from_fn(|i| RewardTerm {
            name: REWARD_TERMS[i],
            raw: raw[i],
            weight: weights.0[i],
            weighted: weights.0[i] * raw[i],
        });
        let total = terms.iter().map(|t| t.weighted).sum();
        RewardBreakdown { terms, total }
    }

    pub fn raw(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.name == name).map(|t| t.raw)
    }

    pub fn zero(weights: &RewardWeights) -> Self {
        Self::from_raw([0.0; 6], weights)
    }
}

/// Constants the reward terms need beyond the two states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardParams {
    pub weights: RewardWeights,
    /// Contact force above which the contact penalty applies, N.
    pub f_max: f64,
    /// Control period used for the base-acceleration finite difference, s.
    pub control_dt: f64,
}

/// Evaluates the six task terms. `action_hist` is `[a_t, a_{t-1}, a_{t-2}]`.
pub fn task_rewards(
    state: &SimState,
    prev: &SimState,
    cmd: &Command,
    action_hist: [&[f64]; 3],
    params: &RewardParams,
) -> RewardBreakdown {
    let mut slip = 0.0;
    let mut excess = 0.0;
    for side in 0..2 {
        if state.foot_contact[side] {
            slip += state.foot_vel[side][0].abs();
        }
        let f = state.foot_force[side];
        excess += (f[0].hypot(f[1]) - params.f_max).max(0.0);
    }
    // planar body: lateral velocity and yaw rate are identically zero
    let dvx = cmd.lin_vel[0] - state.base_lin_vel[0];
    let dvy = cmd.lin_vel[1];
    let lin = (-4.0 * (dvx * dvx + dvy * dvy)).exp();
    let ang = (-4.0 * cmd.yaw_rate * cmd.yaw_rate).exp();
    let ax = (state.base_lin_vel[0] - prev.base_lin_vel[0]) / params.control_dt;
    let az = (state.base_lin_vel[1] - prev.base_lin_vel[1]) / params.control_dt;
    let accel = (-(ax.hypot(az)).powi(3)).exp();
    let [a0, a1, a2] = action_hist;
    let smooth: f64 = a0
        .iter()
        .zip(a1)
        .zip(a2)
        .map(|((x, y), z)| {
            let d = x - 2.0 * y + z;
            d * d
        })
        .sum();
    RewardBreakdown::from_raw([slip, excess, lin, ang, accel, smooth], &params.weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> RewardParams {
        RewardParams {
            weights: RewardWeights::default(),
            f_max: 150.0,
            control_dt: 0.02,
        }
    }

    fn state(vx: f64) -> SimState {
        let mut s = SimState::zeroed(4);
        s.base_lin_vel = [vx, 0.0];
        s
    }

    #[test]
    fn exact_velocity_tracking_is_peak() {
        let s = state(0.3);
        let cmd = Command::forward(0.3);
        let a = [0.0; 4];
        let r = task_rewards(&s, &s, &cmd, [&a, &a, &a], &params());
        assert_eq!(r.terms[2].raw, 1.0);
        assert_eq!(r.terms[2].weighted, 2.4);
    }

    #[test]
    fn half_meter_error_is_exp_minus_one() {
        let s = state(0.0);
        let r = task_rewards(&s, &s, &Command::forward(0.5), [&[0.0], &[0.0], &[0.0]], &params());
        assert!((r.terms[2].raw - (-1.0f64).exp()).abs() < 1e-15);
        assert!((r.terms[2].raw - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn constant_actions_are_smooth() {
        let s = state(0.0);
        let a = [0.3, -0.2, 0.1, 0.9];
        let r = task_rewards(&s, &s, &Command::default(), [&a, &a, &a], &params());
        assert_eq!(r.terms[5].raw, 0.0);
    }

    #[test]
    fn weight_scaling_is_linear() {
        let mut s = state(0.2);
        s.foot_contact = [true, false];
        s.foot_vel[0] = [0.4, 0.0];
        s.foot_force[0] = [10.0, 200.0];
        let prev = state(0.1);
        let (a, b, c) = ([0.1; 4], [0.3; 4], [0.0; 4]);
        let base = task_rewards(&s, &prev, &Command::forward(0.5), [&a, &b, &c], &params());
        let mut p = params();
        p.weights.0.iter_mut().for_each(|w| *w *= 3.0);
        let scaled = task_rewards(&s, &prev, &Command::forward(0.5), [&a, &b, &c], &p);
        for (x, y) in base.terms.iter().zip(&scaled.terms) {
            assert_eq!(x.raw, y.raw);
            assert_eq!(y.weighted, 3.0 * x.weight * x.raw);
        }
        assert!(base.terms[0].weighted <= 0.0 && base.terms[1].weighted <= 0.0 && base.terms[5].weighted <= 0.0);
        for i in 2..5 {
            assert!((0.0..=1.0).contains(&base.terms[i].raw));
        }
    }
}
