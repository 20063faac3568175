//! Planar two-link leg kinematics.
//!
//! Angles follow the simulator convention: a link at absolute angle `θ`
//! points along `(sin θ, -cos θ)`, so 0 is straight down and positive swings
//! the distal end forward (+x). The shank angle is `hip - knee`; a positive
//! knee angle is anatomical flexion (foot moves behind the thigh line).

use super::MotionError;

#[inline]
pub fn link_dir(theta: f64) -> [f64; 2] {
    [theta.sin(), -theta.cos()]
}

/// Returns `(knee, foot)` positions for the given hip position and joint angles.
pub fn fk_two_link(hip_pos: [f64; 2], hip: f64, knee: f64, l1: f64, l2: f64) -> ([f64; 2], [f64; 2]) {
    let d1 = link_dir(hip);
    let d2 = link_dir(hip - knee);
    let knee_pos = [hip_pos[0] + l1 * d1[0], hip_pos[1] + l1 * d1[1]];
    let foot = [knee_pos[0] + l2 * d2[0], knee_pos[1] + l2 * d2[1]];
    (knee_pos, foot)
}

/// Hip and knee angles placing the foot at `foot_target`, knee flexed
/// anatomically (knee angle in `[0, π]`).
pub fn ik_two_link(hip_pos: [f64; 2], foot_target: [f64; 2], l1: f64, l2: f64) -> Result<(f64, f64), MotionError> {
    if !(l1 > 0.0 && l2 > 0.0) {
        return Err(MotionError::InvalidInput(format!("link lengths must be positive, got {l1}, {l2}")));
    }
    let rx = foot_target[0] - hip_pos[0];
    let rz = foot_target[1] - hip_pos[1];
    let dist = rx.hypot(rz);
    let tol = 1e-12 * (l1 + l2);
    if dist > l1 + l2 + tol || dist < (l1 - l2).abs() - tol {
        return Err(MotionError::Unreachable {
            distance: dist,
            min: (l1 - l2).abs(),
            max: l1 + l2,
        });
    }
    let cos_knee = ((dist * dist - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let knee = cos_knee.acos();
    // direction of the hip->foot line, same angle convention as the links
    let line = rx.atan2(-rz);
    let hip = line + (l2 * knee.sin()).atan2(l1 + l2 * knee.cos());
    Ok((hip, knee))
}
