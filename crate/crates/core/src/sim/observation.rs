use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Command, SimState};

/// Half-widths of the uniform observation noise per channel group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevels {
    pub command: f64,
    pub base_ang_vel: f64,
    pub base_rot_xy: f64,
    pub dof_pos: f64,
    pub dof_vel: f64,
    pub last_action: f64,
    /// Global multiplier; 0 turns noise off.
    pub scale: f64,
}

impl Default for NoiseLevels {
    fn default() -> Self {
        NoiseLevels {
            command: 0.0,
            base_ang_vel: 0.3,
            base_rot_xy: 0.09,
            dof_pos: 0.075,
            dof_vel: 2.25,
            last_action: 0.0,
            scale: 1.0,
        }
    }
}

/// The policy's proprioceptive view of one control step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationFrame {
    pub command: [f64; 3],
    /// (roll, pitch, yaw) rates; only pitch is non-trivial in the plane.
    pub base_ang_vel: [f64; 3],
    /// (roll, pitch).
    pub base_rot_xy: [f64; 2],
    pub dof_pos: Vec<f64>,
    pub dof_vel: Vec<f64>,
    pub last_action: Vec<f64>,
}

impl ObservationFrame {
    pub fn dim(num_dof: usize) -> usize {
        3 + 3 + 2 + 3 * num_dof
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::dim(self.dof_pos.len()));
        self.write_into(&mut v);
        v
    }

    pub fn write_into(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.command);
        out.extend_from_slice(&self.base_ang_vel);
        out.extend_from_slice(&self.base_rot_xy);
        out.extend_from_slice(&self.dof_pos);
        out.extend_from_slice(&self.dof_vel);
        out.extend_from_slice(&self.last_action);
    }
}

fn noisy<R: Rng + ?Sized>(v: f64, level: f64, rng: &mut R) -> f64 {
    if level > 0.0 {
        v + rng.random_range(-level..=level)
    } else {
        v
    }
}

/// Builds a noisy observation of `state`.
pub fn observe<R: Rng + ?Sized>(
    state: &SimState,
    cmd: &Command,
    last_action: &[f64],
    noise: &NoiseLevels,
    rng: &mut R,
) -> ObservationFrame {
    let s = noise.scale;
    let ang = [0.0, state.base_pitch_rate, 0.0];
    let rot = [0.0, state.base_pitch];
    ObservationFrame {
        command: cmd.as_array().map(|c| noisy(c, noise.command * s, rng)),
        base_ang_vel: ang.map(|w| noisy(w, noise.base_ang_vel * s, rng)),
        base_rot_xy: rot.map(|r| noisy(r, noise.base_rot_xy * s, rng)),
        dof_pos: state.dof_pos.iter().map(|&q| noisy(q, noise.dof_pos * s, rng)).collect(),
        dof_vel: state.dof_vel.iter().map(|&q| noisy(q, noise.dof_vel * s, rng)).collect(),
        last_action: last_action.iter().map(|&a| noisy(a, noise.last_action * s, rng)).collect(),
    }
}

/// Privileged simulator quantities available to the critic and as
/// estimator targets.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    pub dof_pos: Vec<f64>,
    pub dof_vel: Vec<f64>,
    /// (x, y, z) with y = 0 in the plane.
    pub base_lin_vel: [f64; 3],
    pub base_ang_vel: [f64; 3],
    pub base_height: f64,
}

impl HiddenState {
    pub fn from_state(s: &SimState) -> Self {
        HiddenState {
            dof_pos: s.dof_pos.clone(),
            dof_vel: s.dof_vel.clone(),
            base_lin_vel: [s.base_lin_vel[0], 0.0, s.base_lin_vel[1]],
            base_ang_vel: [0.0, s.base_pitch_rate, 0.0],
            base_height: s.base_height(),
        }
    }

    pub fn dim(num_dof: usize) -> usize {
        2 * num_dof + 7
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::dim(self.dof_pos.len()));
        v.extend_from_slice(&self.dof_pos);
        v.extend_from_slice(&self.dof_vel);
        v.extend_from_slice(&self.base_lin_vel);
        v.extend_from_slice(&self.base_ang_vel);
        v.push(self.base_height);
        v
    }
}
