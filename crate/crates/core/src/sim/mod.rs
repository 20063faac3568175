//! Deterministic planar biped environment.
//!
//! A five-link biped (torso, two thighs, two shanks, point feet) under PD
//! joint control, with spring-damper ground contact and stick-slip Coulomb
//! friction, integrated by semi-implicit Euler at the physics step and
//! exposed at the control rate.

mod dynamics;
mod morphology;
mod observation;
mod randomization;
mod reward;
mod walker;

pub use dynamics::{Multibody, PointKinematics};
pub use morphology::RobotMorphology;
pub use observation::{observe, HiddenState, NoiseLevels, ObservationFrame};
pub use randomization::{RandomizationDraw, RandomizationRanges, Range};
pub use reward::{task_rewards, RewardBreakdown, RewardParams, RewardTerm, RewardWeights, REWARD_TERMS};
pub use walker::{apply_push, Walker, WalkerSnapshot, StepResult};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("action has {got} entries, expected {expected}")]
    ActionDim { expected: usize, got: usize },
    #[error("non-finite action")]
    NonFiniteAction,
    #[error("simulation diverged at t = {time} s")]
    Diverged { time: f64 },
}

/// Full physical state at a control boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    /// Hip joint position (x, z), m.
    pub base_pos: [f64; 2],
    pub base_pitch: f64,
    /// (x, z), m/s.
    pub base_lin_vel: [f64; 2],
    pub base_pitch_rate: f64,
    pub dof_pos: Vec<f64>,
    pub dof_vel: Vec<f64>,
    pub foot_pos: [[f64; 2]; 2],
    pub foot_vel: [[f64; 2]; 2],
    pub foot_contact: [bool; 2],
    /// (tangential, normal) ground reaction per foot, N.
    pub foot_force: [[f64; 2]; 2],
    /// Stick point of the tangential contact spring while a foot is in contact.
    pub contact_anchor: [Option<f64>; 2],
    pub time: f64,
}

impl SimState {
    pub fn zeroed(num_dof: usize) -> Self {
        SimState {
            base_pos: [0.0; 2],
            base_pitch: 0.0,
            base_lin_vel: [0.0; 2],
            base_pitch_rate: 0.0,
            dof_pos: vec![0.0; num_dof],
            dof_vel: vec![0.0; num_dof],
            foot_pos: [[0.0; 2]; 2],
            foot_vel: [[0.0; 2]; 2],
            foot_contact: [false; 2],
            foot_force: [[0.0; 2]; 2],
            contact_anchor: [None; 2],
            time: 0.0,
        }
    }

    pub fn base_height(&self) -> f64 {
        self.base_pos[1]
    }

    pub fn q(&self) -> Vec<f64> {
        let mut q = vec![self.base_pos[0], self.base_pos[1], self.base_pitch];
        q.extend_from_slice(&self.dof_pos);
        q
    }

    pub fn qd(&self) -> Vec<f64> {
        let mut v = vec![self.base_lin_vel[0], self.base_lin_vel[1], self.base_pitch_rate];
        v.extend_from_slice(&self.dof_vel);
        v
    }

    pub(crate) fn set_coords(&mut self, q: &[f64], qd: &[f64]) {
        self.base_pos = [q[0], q[1]];
        self.base_pitch = q[2];
        self.dof_pos.copy_from_slice(&q[3..]);
        self.base_lin_vel = [qd[0], qd[1]];
        self.base_pitch_rate = qd[2];
        self.dof_vel.copy_from_slice(&qd[3..]);
    }

    pub fn is_finite(&self) -> bool {
        self.q().iter().chain(self.qd().iter()).all(|v| v.is_finite())
    }

    /// Discriminator features of this state.
    pub fn style_features(&self) -> Vec<f64> {
        crate::motion::style_features(&self.dof_pos, &self.dof_vel, self.base_height(), self.base_lin_vel)
    }
}

/// Velocity command. Lateral velocity and yaw rate stay zero for the planar body.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Command {
    pub lin_vel: [f64; 2],
    pub yaw_rate: f64,
}

impl Command {
    pub fn forward(vx: f64) -> Self {
        Command {
            lin_vel: [vx, 0.0],
            yaw_rate: 0.0,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.lin_vel[0], self.lin_vel[1], self.yaw_rate]
    }
}

/// Ground profile under the feet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terrain {
    Flat,
    /// Raised-cosine bumps `A (1 - cos(2πx/λ)) / 2`.
    Bumps { amplitude: f64, wavelength: f64 },
}

impl Terrain {
    pub fn height(&self, x: f64) -> f64 {
        match *self {
            Terrain::Flat => 0.0,
            Terrain::Bumps { amplitude, wavelength } => {
                0.5 * amplitude * (1.0 - (std::f64::consts::TAU * x / wavelength).cos())
            }
        }
    }
}

/// Integration, contact and episode constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub physics_dt: f64,
    pub decimation: usize,
    pub gravity: f64,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    pub terrain: Terrain,
    pub history_len: usize,
    pub fall_height: f64,
    pub fall_pitch: f64,
    pub episode_length_s: f64,
    pub push_interval_s: f64,
    pub noise: NoiseLevels,
    /// Contact-force penalty threshold as a multiple of body weight.
    pub f_max_body_weights: f64,
    pub reward_weights: RewardWeights,
    /// Per-joint uniform perturbation of the initial pose, rad.
    pub init_noise: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            physics_dt: 1e-3,
            decimation: 20,
            gravity: 9.81,
            contact_stiffness: 2e4,
            contact_damping: 200.0,
            terrain: Terrain::Flat,
            history_len: 6,
            fall_height: 0.3,
            fall_pitch: 1.0,
            episode_length_s: 20.0,
            push_interval_s: 5.0,
            noise: NoiseLevels::default(),
            f_max_body_weights: 1.5,
            reward_weights: RewardWeights::default(),
            init_noise: 0.02,
        }
    }
}

impl SimConfig {
    pub fn control_dt(&self) -> f64 {
        self.physics_dt * self.decimation as f64
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.physics_dt > 0.0) || self.decimation == 0 {
            return Err(SimError::Config("physics_dt and decimation must be positive".into()));
        }
        if self.history_len == 0 {
            return Err(SimError::Config("history_len must be at least 1".into()));
        }
        if !(self.contact_stiffness >= 0.0 && self.contact_damping >= 0.0) {
            return Err(SimError::Config("contact constants must be non-negative".into()));
        }
        if let Terrain::Bumps { amplitude, wavelength } = self.terrain {
            if !(0.0..=0.03).contains(&amplitude) || !(wavelength > 0.0) {
                return Err(SimError::Config("bump amplitude must lie in [0, 0.03] m with positive wavelength".into()));
            }
        }
        Ok(())
    }
}
