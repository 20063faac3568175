use super::ik::ik_two_link;
use super::{ClipFrame, KeypointTrack, MotionClip, MotionError};
use crate::sim::RobotMorphology;

/// Maximum half-period mirror error (rad) a retargeted clip may show.
pub const SYMMETRY_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct RetargetStats {
    pub scale: f64,
    /// Joint samples that were clipped into the joint limits.
    pub clipped: usize,
    pub mirror_error: f64,
}

/// Scales keypoints to the robot's leg length and solves per-leg IK.
pub fn retarget(track: &KeypointTrack, morph: &RobotMorphology) -> Result<(MotionClip, RetargetStats), MotionError> {
    let (l1, l2) = morph
        .two_link()
        .ok_or_else(|| MotionError::InvalidInput("retargeting supports two-link legs only".into()))?;
    let robot_leg = morph.leg_length();
    if !(robot_leg > 0.0) {
        return Err(MotionError::InvalidInput("robot leg length must be positive".into()));
    }
    if track.frames.len() < 2 {
        return Err(MotionError::InvalidInput("track needs at least two frames".into()));
    }
    let scale = robot_leg / track.source_leg_length();
    let sc = |p: [f64; 2]| [p[0] * scale, p[1] * scale];

    let mut clipped = 0;
    let mut frames = Vec::with_capacity(track.frames.len());
    for (i, kf) in track.frames.iter().enumerate() {
        let mut dof = Vec::with_capacity(4);
        for leg in &kf.legs {
            let (h, k) = ik_two_link(sc(leg.hip), sc(leg.ankle), l1, l2)
                .map_err(|_| MotionError::UnreachableFrame { frame: i })?;
            dof.push(h);
            dof.push(k);
        }
        for (j, q) in dof.iter_mut().enumerate() {
            let (lo, hi) = morph.limit(j);
            if *q < lo || *q > hi {
                *q = q.clamp(lo, hi);
                clipped += 1;
            }
        }
        frames.push(ClipFrame {
            dof_pos: dof,
            base_height: sc(kf.legs[0].hip)[1],
            base_lin_vel: [0.0, 0.0],
        });
    }
    let n = frames.len();
    for i in 0..n {
        let (a, b) = if i + 1 < n { (i, i + 1) } else { (i - 1, i) };
        let pa = sc(track.frames[a].legs[0].hip);
        let pb = sc(track.frames[b].legs[0].hip);
        frames[i].base_lin_vel = [(pb[0] - pa[0]) / track.dt, (pb[1] - pa[1]) / track.dt];
    }
    let clip = MotionClip {
        dt: track.dt,
        frames,
        label: track.label,
        nominal_speed: track.nominal_speed * scale,
    };
    let err = mirror_error(&clip);
    if err > SYMMETRY_TOLERANCE {
        return Err(MotionError::Asymmetric {
            error: err,
            tolerance: SYMMETRY_TOLERANCE,
        });
    }
    Ok((clip, RetargetStats { scale, clipped, mirror_error: err }))
}

/// Smallest, over frame shifts, of the largest left/right joint mismatch
/// when one leg is time-shifted onto the other.
pub fn mirror_error(clip: &MotionClip) -> f64 {
    let n = clip.frames.len();
    let per_leg = clip.num_dof() / 2;
    if n < 2 || per_leg == 0 {
        return 0.0;
    }
    let q = |t: usize, side: usize, j: usize| clip.frames[t].dof_pos[side * per_leg + j];
    (1..=n / 2)
        .map(|shift| {
            let mut worst: f64 = 0.0;
            for t in 0..n - shift {
                for j in 0..per_leg {
                    worst = worst
                        .max((q(t + shift, 0, j) - q(t, 1, j)).abs())
                        .max((q(t + shift, 1, j) - q(t, 0, j)).abs());
                }
            }
            worst
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{generate_gait, Gait};

    fn robot(l1: f64, l2: f64) -> RobotMorphology {
        RobotMorphology {
            link_lengths: vec![l1, l2],
            nominal_hip_height: 0.9 * (l1 + l2),
            ..RobotMorphology::default()
        }
    }

    #[test]
    fn unit_scale_passes_keypoints_through() {
        let track = generate_gait(Gait::Walk, 0.3, 2.0, 0.02, 0.3, 0.3).unwrap();
        let (clip, stats) = retarget(&track, &robot(0.3, 0.3)).unwrap();
        assert_eq!(stats.scale, 1.0);
        for (kf, cf) in track.frames.iter().zip(&clip.frames) {
            assert_eq!(kf.legs[0].hip[1], cf.base_height);
        }
        assert_eq!(clip.nominal_speed, 0.3);
    }

    #[test]
    fn half_size_robot_halves_distances() {
        let track = generate_gait(Gait::Walk, 0.4, 2.0, 0.02, 0.45, 0.45).unwrap();
        let (clip, stats) = retarget(&track, &robot(0.225, 0.225)).unwrap();
        assert!((stats.scale - 0.5).abs() < 1e-15);
        for (kf, cf) in track.frames.iter().zip(&clip.frames) {
            assert!((cf.base_height - 0.5 * kf.legs[0].hip[1]).abs() < 1e-12);
        }
        assert!((clip.nominal_speed - 0.2).abs() < 1e-12);
    }

    #[test]
    fn angles_are_scale_free() {
        let track = generate_gait(Gait::Run, 1.0, 2.0, 0.02, 0.45, 0.45).unwrap();
        let (a, _) = retarget(&track, &robot(0.3, 0.3)).unwrap();
        let (b, _) = retarget(&track, &robot(0.6, 0.6)).unwrap();
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            for (qa, qb) in fa.dof_pos.iter().zip(&fb.dof_pos) {
                assert!((qa - qb).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn retargeted_walk_is_symmetric() {
        let track = generate_gait(Gait::Walk, 0.4, 4.0, 0.02, 0.45, 0.45).unwrap();
        let (clip, stats) = retarget(&track, &RobotMorphology::default()).unwrap();
        assert!(stats.mirror_error < 1e-3);
        assert_eq!(mirror_error(&clip), stats.mirror_error);
    }

    #[test]
    fn asymmetric_clip_detected() {
        let track = generate_gait(Gait::Walk, 0.4, 4.0, 0.02, 0.45, 0.45).unwrap();
        let (mut clip, _) = retarget(&track, &RobotMorphology::default()).unwrap();
        for f in &mut clip.frames {
            f.dof_pos[2] += 0.05;
        }
        assert!(mirror_error(&clip) > 0.04);
    }

    #[test]
    fn tight_limits_are_clipped_and_counted() {
        let track = generate_gait(Gait::Walk, 0.4, 2.0, 0.02, 0.45, 0.45).unwrap();
        let mut m = RobotMorphology::default();
        m.joint_limits[1] = (0.0, 0.2);
        let (clip, stats) = retarget(&track, &m).unwrap();
        assert!(stats.clipped > 0);
        assert!(clip.frames.iter().all(|f| f.dof_pos[1] <= 0.2 && f.dof_pos[3] <= 0.2));
    }
}
