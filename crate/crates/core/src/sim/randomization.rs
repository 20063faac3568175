use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimError;

/// Closed interval, written `[lo, hi]` in configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64)", into = "(f64, f64)")]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl From<(f64, f64)> for Range {
    fn from((lo, hi): (f64, f64)) -> Self {
        Range { lo, hi }
    }
}

impl From<Range> for (f64, f64) {
    fn from(r: Range) -> Self {
        (r.lo, r.hi)
    }
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    pub const fn point(v: f64) -> Self {
        Range { lo: v, hi: v }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Per-episode physical perturbations. Push magnitudes are velocity impulses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizationRanges {
    /// Base-mass offset for a reference robot of `base_mass_reference` kg;
    /// applied proportionally to the actual torso mass.
    pub base_mass: Range,
    pub base_mass_reference: f64,
    pub com_shift: Range,
    pub friction: Range,
    pub kp_factor: Range,
    pub kd_factor: Range,
    pub push_lin: Range,
    pub push_ang: Range,
    pub motor_strength: Range,
    /// Action latency, ms.
    pub action_delay: Range,
}

/// Outer bounds every configured range must lie within.
pub const RANDOMIZATION_BOUNDS: [(&str, Range); 9] = [
    ("base_mass", Range::new(-5.0, 5.0)),
    ("com_shift", Range::new(-0.02, 0.02)),
    ("friction", Range::new(0.1, 2.0)),
    ("kp_factor", Range::new(0.8, 1.2)),
    ("kd_factor", Range::new(0.8, 1.2)),
    ("push_lin", Range::new(-0.6, 0.6)),
    ("push_ang", Range::new(-0.6, 0.6)),
    ("motor_strength", Range::new(0.8, 1.2)),
    ("action_delay", Range::new(0.0, 60.0)),
];

impl Default for RandomizationRanges {
    fn default() -> Self {
        let b = |i: usize| RANDOMIZATION_BOUNDS[i].1;
        RandomizationRanges {
            base_mass: b(0),
            base_mass_reference: 23.0,
            com_shift: b(1),
            friction: b(2),
            kp_factor: b(3),
            kd_factor: b(4),
            push_lin: b(5),
            push_ang: b(6),
            motor_strength: b(7),
            action_delay: b(8),
        }
    }
}

impl RandomizationRanges {
    /// Every range collapsed to its nominal value.
    pub fn nominal() -> Self {
        RandomizationRanges {
            base_mass: Range::point(0.0),
            base_mass_reference: 23.0,
            com_shift: Range::point(0.0),
            friction: Range::point(1.0),
            kp_factor: Range::point(1.0),
            kd_factor: Range::point(1.0),
            push_lin: Range::point(0.0),
            push_ang: Range::point(0.0),
            motor_strength: Range::point(1.0),
            action_delay: Range::point(0.0),
        }
    }

    pub fn ranges(&self) -> [(&'static str, Range); 9] {
        [
            ("base_mass", self.base_mass),
            ("com_shift", self.com_shift),
            ("friction", self.friction),
            ("kp_factor", self.kp_factor),
            ("kd_factor", self.kd_factor),
            ("push_lin", self.push_lin),
            ("push_ang", self.push_ang),
            ("motor_strength", self.motor_strength),
            ("action_delay", self.action_delay),
        ]
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for ((name, r), (_, bound)) in self.ranges().iter().zip(RANDOMIZATION_BOUNDS) {
            if !(r.lo <= r.hi) {
                return Err(SimError::Config(format!("{name} range [{}, {}] is inverted", r.lo, r.hi)));
            }
            if !(bound.contains(r.lo) && bound.contains(r.hi)) {
                return Err(SimError::Config(format!(
                    "{name} range [{}, {}] exceeds [{}, {}]",
                    r.lo, r.hi, bound.lo, bound.hi
                )));
            }
        }
        if !(self.base_mass_reference > 0.0) {
            return Err(SimError::Config("base_mass_reference must be > 0".into()));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> RandomizationDraw {
        RandomizationDraw {
            base_mass_delta: self.base_mass.sample(rng),
            com_shift: self.com_shift.sample(rng),
            friction_coeff: self.friction.sample(rng),
            kp_factor: self.kp_factor.sample(rng),
            kd_factor: self.kd_factor.sample(rng),
            push_lin: self.push_lin.sample(rng),
            push_ang: self.push_ang.sample(rng),
            motor_strength_factor: self.motor_strength.sample(rng),
            action_delay: self.action_delay.sample(rng),
        }
    }
}

/// One episode's sampled perturbations. `base_mass_delta` is in the
/// reference robot's units; push fields hold the most recent push.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizationDraw {
    pub base_mass_delta: f64,
    pub com_shift: f64,
    pub friction_coeff: f64,
    pub kp_factor: f64,
    pub kd_factor: f64,
    pub push_lin: f64,
    pub push_ang: f64,
    pub motor_strength_factor: f64,
    pub action_delay: f64,
}

impl RandomizationDraw {
    /// Torso mass change in kg for a robot whose torso weighs `torso_mass`.
    pub fn applied_mass_delta(&self, torso_mass: f64, reference: f64) -> f64 {
        self.base_mass_delta * torso_mass / reference
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn draws_stay_in_range() {
        let r = RandomizationRanges::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let d = r.sample(&mut rng);
            assert!((0.1..=2.0).contains(&d.friction_coeff));
            assert!((0.0..=60.0).contains(&d.action_delay));
            assert!((-0.6..=0.6).contains(&d.push_lin));
        }
    }

    #[test]
    fn collapsed_ranges_give_the_point() {
        let r = RandomizationRanges::nominal();
        let d = r.sample(&mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(d.friction_coeff, 1.0);
        assert_eq!(d.base_mass_delta, 0.0);
        assert_eq!(d.action_delay, 0.0);
    }

    #[test]
    fn inverted_friction_names_friction() {
        let mut r = RandomizationRanges::default();
        r.friction = Range::new(2.0, 0.1);
        let msg = r.validate().unwrap_err().to_string();
        assert!(msg.contains("friction"), "{msg}");
    }

    #[test]
    fn mass_delta_scales_with_torso() {
        let d = RandomizationDraw {
            base_mass_delta: 5.0,
            com_shift: 0.0,
            friction_coeff: 1.0,
            kp_factor: 1.0,
            kd_factor: 1.0,
            push_lin: 0.0,
            push_ang: 0.0,
            motor_strength_factor: 1.0,
            action_delay: 0.0,
        };
        assert!((d.applied_mass_delta(6.0, 23.0) - 6.0 * 5.0 / 23.0).abs() < 1e-15);
    }
}
