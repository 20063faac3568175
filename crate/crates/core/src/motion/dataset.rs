use rand::Rng;

use super::{generate_gait, retarget, Gait, MotionClip, MotionError};
use crate::sim::RobotMorphology;

/// Discriminator input: features of two consecutive frames.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionPair {
    pub feat_t: Vec<f64>,
    pub feat_t1: Vec<f64>,
}

impl TransitionPair {
    /// `feat_t ⊕ feat_t1`, the discriminator's input row.
    pub fn concat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.feat_t.len() * 2);
        v.extend_from_slice(&self.feat_t);
        v.extend_from_slice(&self.feat_t1);
        v
    }
}

/// Immutable set of reference clips with precomputed frame features.
#[derive(Debug, Clone)]
pub struct MotionDataset {
    clips: Vec<MotionClip>,
    features: Vec<Vec<Vec<f64>>>,
    /// Cumulative transition counts; clip `c` owns pairs `offsets[c]..offsets[c+1]`.
    offsets: Vec<usize>,
}

/// Speeds of the default reference set as `(gait, robot speed in m/s)`.
pub const DEFAULT_CLIP_SET: [(Gait, f64); 6] = [
    (Gait::Walk, -0.4),
    (Gait::Walk, -0.2),
    (Gait::Walk, 0.2),
    (Gait::Walk, 0.4),
    (Gait::Run, 0.8),
    (Gait::Run, 1.0),
];

/// Source skeleton used for the synthetic reference set (human-sized legs).
pub const SOURCE_THIGH: f64 = 0.45;
pub const SOURCE_SHANK: f64 = 0.45;

impl MotionDataset {
    pub fn new(clips: Vec<MotionClip>) -> Result<Self, MotionError> {
        if clips.is_empty() {
            return Err(MotionError::EmptyDataset);
        }
        let mut offsets = vec![0];
        let mut features = Vec::with_capacity(clips.len());
        for (i, c) in clips.iter().enumerate() {
            if c.frames.len() < 2 {
                return Err(MotionError::InvalidInput(format!("clip {i} has fewer than two frames")));
            }
            features.push((0..c.frames.len()).map(|f| c.features(f)).collect());
            offsets.push(offsets.last().unwrap() + c.frames.len() - 1);
        }
        Ok(MotionDataset { clips, features, offsets })
    }

    /// The default walk/run reference set retargeted to `morph` at frame step `dt`.
    pub fn default_set(morph: &RobotMorphology, dt: f64, duration: f64) -> Result<Self, MotionError> {
        let scale = morph.leg_length() / (SOURCE_THIGH + SOURCE_SHANK);
        let clips = DEFAULT_CLIP_SET
            .iter()
            .map(|&(gait, speed)| {
                let track = generate_gait(gait, speed / scale, duration, dt, SOURCE_THIGH, SOURCE_SHANK)?;
                Ok(retarget(&track, morph)?.0)
            })
            .collect::<Result<Vec<_>, MotionError>>()?;
        Self::new(clips)
    }

    pub fn clips(&self) -> &[MotionClip] {
        &self.clips
    }

    pub fn num_pairs(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn feature_dim(&self) -> usize {
        self.features[0][0].len()
    }

    /// Clip index and frame of global pair index `k`.
    pub fn locate(&self, k: usize) -> (usize, usize) {
        let c = self.offsets.partition_point(|&o| o <= k) - 1;
        (c, k - self.offsets[c])
    }

    pub fn pair(&self, clip: usize, frame: usize) -> TransitionPair {
        TransitionPair {
            feat_t: self.features[clip][frame].clone(),
            feat_t1: self.features[clip][frame + 1].clone(),
        }
    }

    /// Uniform draw over all `(clip, frame)` transitions.
    pub fn sample_transitions<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<TransitionPair> {
        (0..batch)
            .map(|_| {
                let (c, f) = self.locate(rng.random_range(0..self.num_pairs()));
                self.pair(c, f)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::ClipFrame;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat_clip(n: usize, q: f64) -> MotionClip {
        MotionClip {
            dt: 0.02,
            frames: (0..n)
                .map(|i| ClipFrame {
                    dof_pos: vec![q + i as f64 * 0.01; 4],
                    base_height: 0.5,
                    base_lin_vel: [0.1, 0.0],
                })
                .collect(),
            label: Gait::Walk,
            nominal_speed: 0.1,
        }
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(matches!(MotionDataset::new(vec![]), Err(MotionError::EmptyDataset)));
    }

    #[test]
    fn two_frame_clip_always_yields_same_pair() {
        let ds = MotionDataset::new(vec![flat_clip(2, 0.1)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = ds.sample_transitions(20, &mut rng);
        assert!(s.windows(2).all(|w| w[0] == w[1]));
        assert!(ds.sample_transitions(0, &mut rng).is_empty());
    }

    #[test]
    fn sampling_is_length_proportional() {
        let ds = MotionDataset::new(vec![flat_clip(100, 0.0), flat_clip(300, 1.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let second = ds
            .sample_transitions(n, &mut rng)
            .iter()
            .filter(|p| p.feat_t[0] >= 1.0)
            .count();
        let freq = second as f64 / n as f64;
        assert!((freq - 0.75).abs() < 0.01, "freq {freq}");
    }

    #[test]
    fn locate_covers_boundaries() {
        let ds = MotionDataset::new(vec![flat_clip(3, 0.0), flat_clip(4, 1.0)]).unwrap();
        assert_eq!(ds.num_pairs(), 5);
        assert_eq!(ds.locate(0), (0, 0));
        assert_eq!(ds.locate(1), (0, 1));
        assert_eq!(ds.locate(2), (1, 0));
        assert_eq!(ds.locate(4), (1, 2));
    }

    #[test]
    fn default_set_has_requested_speeds() {
        let m = RobotMorphology::default();
        let ds = MotionDataset::default_set(&m, 0.02, 4.0).unwrap();
        for (clip, (gait, v)) in ds.clips().iter().zip(DEFAULT_CLIP_SET) {
            assert_eq!(clip.label, gait);
            assert!((clip.nominal_speed - v).abs() < 1e-12);
            let mean_v: f64 = clip.frames.iter().map(|f| f.base_lin_vel[0]).sum::<f64>() / clip.frames.len() as f64;
            assert!((mean_v - v).abs() <= 0.05 * v.abs(), "{mean_v} vs {v}");
        }
    }
}
