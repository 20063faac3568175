//! Reference motion: synthetic gait keypoints, retargeting onto the robot,
//! clip storage, and the transition pairs the discriminator consumes.

mod dataset;
mod gait;
pub mod ik;
mod io;
mod retarget;

pub use dataset::{MotionDataset, TransitionPair};
pub use gait::{generate_gait, gait_envelope, Gait, KeypointFrame, KeypointTrack, LegKeypoints};
pub use ik::{fk_two_link, ik_two_link};
pub use io::{load_clip, load_track, save_clip, save_track};
pub use retarget::{mirror_error, retarget, RetargetStats, SYMMETRY_TOLERANCE};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("target at distance {distance} outside reachable annulus [{min}, {max}]")]
    Unreachable { distance: f64, min: f64, max: f64 },
    #[error("frame {frame}: foot target unreachable after scaling")]
    UnreachableFrame { frame: usize },
    #[error("{gait} speed {speed} m/s outside envelope [{min}, {max}] m/s")]
    SpeedOutOfEnvelope {
        gait: Gait,
        speed: f64,
        min: f64,
        max: f64,
    },
    #[error("symmetry check failed: mirror error {error} rad exceeds {tolerance} rad")]
    Asymmetric { error: f64, tolerance: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: joint {joint} angle {value} outside limits [{lo}, {hi}]")]
    JointLimit {
        line: usize,
        joint: String,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("empty motion dataset")]
    EmptyDataset,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One retargeted reference frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipFrame {
    pub dof_pos: Vec<f64>,
    pub base_height: f64,
    /// (x, z) base velocity.
    pub base_lin_vel: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionClip {
    pub dt: f64,
    pub frames: Vec<ClipFrame>,
    pub label: Gait,
    pub nominal_speed: f64,
}

impl MotionClip {
    pub fn num_dof(&self) -> usize {
        self.frames.first().map_or(0, |f| f.dof_pos.len())
    }

    /// Joint velocities by central differences (one-sided at the ends).
    pub fn dof_vel(&self, frame: usize) -> Vec<f64> {
        let n = self.frames.len();
        let (a, b, span) = if n < 2 {
            return vec![0.0; self.num_dof()];
        } else if frame == 0 {
            (0, 1, self.dt)
        } else if frame + 1 == n {
            (n - 2, n - 1, self.dt)
        } else {
            (frame - 1, frame + 1, 2.0 * self.dt)
        };
        self.frames[a]
            .dof_pos
            .iter()
            .zip(&self.frames[b].dof_pos)
            .map(|(qa, qb)| (qb - qa) / span)
            .collect()
    }

    /// Discriminator features of one frame.
    pub fn features(&self, frame: usize) -> Vec<f64> {
        let f = &self.frames[frame];
        style_features(&f.dof_pos, &self.dof_vel(frame), f.base_height, f.base_lin_vel)
    }
}

/// Discriminator feature map `[dof_pos, dof_vel, base_height, base_lin_vel]`,
/// shared by reference clips and live rollouts.
pub fn style_features(dof_pos: &[f64], dof_vel: &[f64], base_height: f64, base_lin_vel: [f64; 2]) -> Vec<f64> {
    let mut out = Vec::with_capacity(dof_pos.len() * 2 + 3);
    out.extend_from_slice(dof_pos);
    out.extend_from_slice(dof_vel);
    out.push(base_height);
    out.extend_from_slice(&base_lin_vel);
    out
}

pub fn style_feature_dim(num_dof: usize) -> usize {
    2 * num_dof + 3
}
