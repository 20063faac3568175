use serde::{Deserialize, Serialize};

use super::SimError;
use crate::motion::ik_two_link;

/// Physical description of the planar biped: a torso above the hip joint and
/// two identical serial legs ending in point feet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotMorphology {
    pub torso_mass: f64,
    pub torso_length: f64,
    /// Height of the torso centre of mass above the hip joint.
    pub torso_com_height: f64,
    /// Per-leg link lengths, hip to foot (thigh, shank by default).
    pub link_lengths: Vec<f64>,
    pub link_masses: Vec<f64>,
    /// +1 if a positive joint angle swings the distal link forward, -1 for
    /// joints that flex backwards (the knee).
    pub joint_signs: Vec<f64>,
    /// Per-leg joint limits, shared by both legs.
    pub joint_limits: Vec<(f64, f64)>,
    pub pd_kp: Vec<f64>,
    pub pd_kd: Vec<f64>,
    pub torque_limit: Vec<f64>,
    pub nominal_hip_height: f64,
    /// Fore-aft foot offset of the nominal stance (left forward, right back).
    pub stance_half_width: f64,
}

impl Default for RobotMorphology {
    fn default() -> Self {
        // 10 kg total: torso 6 kg, thighs 1.2 kg, shanks 0.8 kg.
        RobotMorphology {
            torso_mass: 6.0,
            torso_length: 0.4,
            torso_com_height: 0.2,
            link_lengths: vec![0.3, 0.3],
            link_masses: vec![1.2, 0.8],
            joint_signs: vec![1.0, -1.0],
            joint_limits: vec![(-1.2, 1.2), (-0.05, 2.4)],
            pd_kp: vec![100.0, 100.0],
            pd_kd: vec![2.0, 2.0],
            torque_limit: vec![40.0, 40.0],
            nominal_hip_height: 0.55,
            stance_half_width: 0.12,
        }
    }
}

impl RobotMorphology {
    pub fn joints_per_leg(&self) -> usize {
        self.link_lengths.len()
    }

    pub fn num_dof(&self) -> usize {
        2 * self.joints_per_leg()
    }

    pub fn leg_length(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.torso_mass + 2.0 * self.link_masses.iter().sum::<f64>()
    }

    /// Limits for global joint index `j` (left leg first).
    pub fn limit(&self, j: usize) -> (f64, f64) {
        self.joint_limits[j % self.joints_per_leg()]
    }

    pub fn joint_names(&self) -> Vec<String> {
        let base: Vec<String> = if self.joints_per_leg() == 2 {
            vec!["hip".into(), "knee".into()]
        } else {
            (0..self.joints_per_leg()).map(|i| format!("j{i}")).collect()
        };
        ["l", "r"]
            .iter()
            .flat_map(|side| base.iter().map(move |b| format!("{b}_{side}")))
            .collect()
    }

    /// Thigh and shank lengths when the leg is a two-link chain.
    pub fn two_link(&self) -> Option<(f64, f64)> {
        match self.link_lengths.as_slice() {
            [a, b] => Some((*a, *b)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if !(self.torso_mass > 0.0) {
            return bad(format!("torso_mass must be > 0, got {}", self.torso_mass));
        }
        if !(self.torso_length > 0.0) {
            return bad(format!("torso_length must be > 0, got {}", self.torso_length));
        }
        let n = self.link_lengths.len();
        if n == 0 {
            return bad("at least one leg link required".into());
        }
        for (name, len) in [
            ("link_masses", self.link_masses.len()),
            ("joint_signs", self.joint_signs.len()),
            ("joint_limits", self.joint_limits.len()),
            ("pd_kp", self.pd_kp.len()),
            ("pd_kd", self.pd_kd.len()),
            ("torque_limit", self.torque_limit.len()),
        ] {
            if len != n {
                return bad(format!("{name} has {len} entries, expected {n}"));
            }
        }
        if let Some(l) = self.link_lengths.iter().find(|&&l| !(l > 0.0)) {
            return bad(format!("link lengths must be > 0, got {l}"));
        }
        if let Some(m) = self.link_masses.iter().find(|&&m| !(m > 0.0)) {
            return bad(format!("link masses must be > 0, got {m}"));
        }
        if let Some((lo, hi)) = self.joint_limits.iter().find(|(lo, hi)| !(lo < hi)) {
            return bad(format!("joint limits need lower < upper, got [{lo}, {hi}]"));
        }
        if self.pd_kp.iter().chain(&self.pd_kd).chain(&self.torque_limit).any(|v| !(*v >= 0.0)) {
            return bad("PD gains and torque limits must be non-negative".into());
        }
        if !(self.nominal_hip_height > 0.0 && self.nominal_hip_height < self.leg_length()) {
            return bad(format!(
                "nominal_hip_height {} must lie in (0, leg length {})",
                self.nominal_hip_height,
                self.leg_length()
            ));
        }
        Ok(())
    }

    /// Standing joint configuration: feet on the ground at
    /// `±stance_half_width` beneath a hip at `nominal_hip_height`.
    pub fn nominal_pose(&self) -> Result<Vec<f64>, SimError> {
        let (l1, l2) = self
            .two_link()
            .ok_or_else(|| SimError::Config("nominal pose requires two-link legs".into()))?;
        let mut pose = Vec::with_capacity(4);
        for dx in [self.stance_half_width, -self.stance_half_width] {
            let (h, k) = ik_two_link([0.0, 0.0], [dx, -self.nominal_hip_height], l1, l2)
                .map_err(|e| SimError::Config(format!("nominal stance unreachable: {e}")))?;
            pose.push(h);
            pose.push(k);
        }
        Ok(pose)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_ten_kilograms() {
        let m = RobotMorphology::default();
        assert!((m.total_mass() - 10.0).abs() < 1e-12);
        assert_eq!(m.num_dof(), 4);
        m.validate().unwrap();
        assert_eq!(m.joint_names(), ["hip_l", "knee_l", "hip_r", "knee_r"]);
    }

    #[test]
    fn rejects_nonpositive_mass_and_length() {
        let mut m = RobotMorphology::default();
        m.link_masses[1] = 0.0;
        assert!(m.validate().is_err());
        let mut m = RobotMorphology::default();
        m.link_lengths[0] = -0.3;
        assert!(m.validate().is_err());
        let mut m = RobotMorphology::default();
        m.joint_limits[0] = (1.0, -1.0);
        assert!(m.validate().is_err());
    }

    #[test]
    fn nominal_pose_is_within_limits() {
        let m = RobotMorphology::default();
        let pose = m.nominal_pose().unwrap();
        for (j, q) in pose.iter().enumerate() {
            let (lo, hi) = m.limit(j);
            assert!(*q > lo && *q < hi);
        }
    }
}
