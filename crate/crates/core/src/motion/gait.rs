//! Synthetic human-like gait keypoints, standing in for motion capture.
//!
//! The pelvis moves at constant speed. Each foot alternates a stance phase,
//! where it is planted and slides backwards relative to the hip, with a swing
//! phase along a raised cosine arc. The right leg lags the left by half a
//! cycle. Knees come from IK on the source skeleton so every chain respects
//! its segment lengths.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use super::ik::{fk_two_link, ik_two_link};
use super::MotionError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Gait {
    Walk,
    Run,
}

impl fmt::Display for Gait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gait::Walk => "walk",
            Gait::Run => "run",
        })
    }
}

impl FromStr for Gait {
    type Err = MotionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "walk" => Ok(Gait::Walk),
            "run" => Ok(Gait::Run),
            other => Err(MotionError::InvalidInput(format!("unknown gait label {other:?}"))),
        }
    }
}

struct GaitShape {
    period: f64,
    duty: f64,
    /// Hip height as a fraction of leg length.
    hip_height: f64,
    /// Swing apex as a fraction of leg length.
    lift: f64,
    /// Speed envelope in leg lengths per second.
    envelope: (f64, f64),
}

fn shape(gait: Gait) -> GaitShape {
    match gait {
        Gait::Walk => GaitShape {
            period: 1.0,
            duty: 0.6,
            hip_height: 0.90,
            lift: 0.08,
            envelope: (-1.0, 1.0),
        },
        Gait::Run => GaitShape {
            period: 0.72,
            duty: 0.4,
            hip_height: 0.88,
            lift: 0.14,
            envelope: (0.6, 2.0),
        },
    }
}

/// Valid speed range in m/s for a source skeleton with the given leg length.
pub fn gait_envelope(gait: Gait, leg_length: f64) -> (f64, f64) {
    let (lo, hi) = shape(gait).envelope;
    (lo * leg_length, hi * leg_length)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegKeypoints {
    pub hip: [f64; 2],
    pub knee: [f64; 2],
    pub ankle: [f64; 2],
}

/// Keypoints for the left (index 0) and right leg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointFrame {
    pub legs: [LegKeypoints; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeypointTrack {
    pub dt: f64,
    pub frames: Vec<KeypointFrame>,
    pub source_thigh: f64,
    pub source_shank: f64,
    pub label: Gait,
    pub nominal_speed: f64,
}

impl KeypointTrack {
    pub fn source_leg_length(&self) -> f64 {
        self.source_thigh + self.source_shank
    }
}

/// Foot position relative to the hip at cycle phase `phase ∈ [0, 1)`.
fn foot_offset(s: &GaitShape, phase: f64, stride: f64, leg: f64) -> [f64; 2] {
    let ground = -s.hip_height * leg;
    if phase < s.duty {
        let tau = phase / s.duty;
        [stride * (0.5 - tau), ground]
    } else {
        let tau = (phase - s.duty) / (1.0 - s.duty);
        let x = -0.5 * stride + stride * 0.5 * (1.0 - (PI * tau).cos());
        [x, ground + s.lift * leg * (PI * tau).sin()]
    }
}

/// Generates a gait for a source skeleton with the given segment lengths.
pub fn generate_gait(
    gait: Gait,
    speed: f64,
    duration: f64,
    dt: f64,
    thigh: f64,
    shank: f64,
) -> Result<KeypointTrack, MotionError> {
    if !(dt > 0.0) || !(thigh > 0.0) || !(shank > 0.0) {
        return Err(MotionError::InvalidInput("dt and segment lengths must be positive".into()));
    }
    let leg = thigh + shank;
    let s = shape(gait);
    let (lo, hi) = gait_envelope(gait, leg);
    if !(lo..=hi).contains(&speed) {
        return Err(MotionError::SpeedOutOfEnvelope { gait, speed, min: lo, max: hi });
    }
    // keep half a cycle an integer number of frames so the legs mirror exactly
    let half_frames = ((0.5 * s.period / dt).round() as usize).max(1);
    let period = 2.0 * half_frames as f64 * dt;
    if duration < period {
        return Err(MotionError::InvalidInput(format!(
            "duration {duration} s shorter than one gait cycle ({period} s)"
        )));
    }
    let n = (duration / dt).round() as usize + 1;
    let stride = speed * s.duty * period;
    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * dt;
        let hip = [speed * t, s.hip_height * leg];
        let cycle = i % (2 * half_frames);
        let mut legs = [LegKeypoints { hip, knee: hip, ankle: hip }; 2];
        for (side, kp) in legs.iter_mut().enumerate() {
            let phase = ((cycle + side * half_frames) % (2 * half_frames)) as f64 / (2 * half_frames) as f64;
            let off = foot_offset(&s, phase, stride, leg);
            let ankle = [hip[0] + off[0], hip[1] + off[1]];
            let (h, k) = ik_two_link(hip, ankle, thigh, shank).map_err(|_| MotionError::UnreachableFrame { frame: i })?;
            let (knee, _) = fk_two_link(hip, h, k, thigh, shank);
            *kp = LegKeypoints { hip, knee, ankle };
        }
        frames.push(KeypointFrame { legs });
    }
    Ok(KeypointTrack {
        dt,
        frames,
        source_thigh: thigh,
        source_shank: shank,
        label: gait,
        nominal_speed: speed,
    })
}
