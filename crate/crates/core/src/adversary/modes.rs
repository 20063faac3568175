//! Mode-coverage experiment: a small generator trained against the
//! discriminator on a ring of 2-D Gaussians.

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{AdversaryConfig, Criterion, Discriminator};
use crate::net::{Activation, Adam, NetError, NetParams, NetSpec};

/// `modes` isotropic Gaussians evenly spaced on a circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianRing {
    pub modes: usize,
    pub radius: f64,
    pub sigma: f64,
}

impl Default for GaussianRing {
    fn default() -> Self {
        GaussianRing {
            modes: 8,
            radius: 2.0,
            sigma: 0.05,
        }
    }
}

impl GaussianRing {
    pub fn centers(&self) -> Vec<[f64; 2]> {
        (0..self.modes)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / self.modes as f64;
                [self.radius * a.cos(), self.radius * a.sin()]
            })
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Array2<f64> {
        let centers = self.centers();
        let mut out = Array2::zeros((n, 2));
        for mut row in out.axis_iter_mut(Axis(0)) {
            let c = centers[rng.random_range(0..self.modes)];
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            row[0] = c[0] + self.sigma * dx;
            row[1] = c[1] + self.sigma * dy;
        }
        out
    }

    /// Fraction of samples within `3 sigma` of each center.
    pub fn mode_fractions(&self, samples: &Array2<f64>) -> Vec<f64> {
        let centers = self.centers();
        let mut hits = vec![0usize; self.modes];
        let r = 3.0 * self.sigma;
        for row in samples.axis_iter(Axis(0)) {
            for (m, c) in centers.iter().enumerate() {
                if (row[0] - c[0]).hypot(row[1] - c[1]) <= r {
                    hits[m] += 1;
                    break;
                }
            }
        }
        let n = samples.nrows().max(1) as f64;
        hits.iter().map(|&h| h as f64 / n).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCoverageConfig {
    pub ring: GaussianRing,
    pub steps: usize,
    pub batch: usize,
    pub latent: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub disc_steps: usize,
    pub eval_samples: usize,
    /// Minimum sample share for a mode to count as recovered.
    pub min_fraction: f64,
}

impl Default for ModeCoverageConfig {
    fn default() -> Self {
        ModeCoverageConfig {
            ring: GaussianRing::default(),
            steps: 1500,
            batch: 128,
            latent: 2,
            hidden: vec![64, 64],
            lr: 1e-3,
            disc_steps: 2,
            eval_samples: 5000,
            min_fraction: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeCoverage {
    pub recovered: usize,
    pub fractions: Vec<f64>,
}

fn latent_batch<R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_fn((n, dim), |_| rng.sample(StandardNormal))
}

/// Trains generator and discriminator adversarially and counts recovered modes.
pub fn mode_coverage(criterion: Criterion, seed: u64, cfg: &ModeCoverageConfig) -> Result<ModeCoverage, NetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let adv = AdversaryConfig {
        criterion,
        reward_map: criterion.default_map(),
        hidden: cfg.hidden.clone(),
        lr: cfg.lr,
        batch_size: cfg.batch,
        ..AdversaryConfig::default()
    };
    let mut disc = Discriminator::new(2, adv, &mut rng)?;
    disc.adam = Adam::with_betas(&disc.params, cfg.lr, 0.5, 0.999, 1e-8);
    let gspec = NetSpec::mlp(cfg.latent, &cfg.hidden, 2, Activation::Tanh);
    let mut gen = NetParams::init(gspec, 1.0, &mut rng)?;
    let mut gadam = Adam::with_betas(&gen, cfg.lr, 0.5, 0.999, 1e-8);

    for _ in 0..cfg.steps {
        for _ in 0..cfg.disc_steps {
            let real = cfg.ring.sample(cfg.batch, &mut rng);
            let z = latent_batch(cfg.batch, cfg.latent, &mut rng);
            let fake = gen.predict(z.view())?;
            disc.update(real.view(), fake.view(), &mut rng)?;
        }
        let z = latent_batch(cfg.batch, cfg.latent, &mut rng);
        let gcache = gen.forward(z.view())?;
        let x = gcache.output().clone();
        let dcache = disc.params.forward(x.view())?;
        let n = cfg.batch as f64;
        let dgrad = match criterion {
            Criterion::Lsgan => dcache.output().mapv(|d| 2.0 * (d - 1.0) / n),
            Criterion::WganDiv => dcache.output().mapv(|_| -1.0 / n),
        };
        let through_d = disc.params.backward(&dcache, dgrad.view())?;
        let mut ggrad = gen.backward(&gcache, through_d.input.view())?;
        if !ggrad.is_finite() {
            continue;
        }
        ggrad.clip_norm(10.0);
        gadam.step(&mut gen, &ggrad)?;
    }

    let z = latent_batch(cfg.eval_samples, cfg.latent, &mut rng);
    let samples = gen.predict(z.view())?;
    let fractions = cfg.ring.mode_fractions(&samples);
    let recovered = fractions.iter().filter(|&&f| f >= cfg.min_fraction).count();
    Ok(ModeCoverage { recovered, fractions })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_samples_cover_all_modes() {
        let ring = GaussianRing::default();
        let s = ring.sample(8000, &mut ChaCha8Rng::seed_from_u64(0));
        let f = ring.mode_fractions(&s);
        // 3 sigma in 2-D keeps 1 - exp(-4.5) ≈ 98.9% of each mode
        let total: f64 = f.iter().sum();
        assert!((total - 0.989).abs() < 0.01, "{total}");
        assert!(f.iter().all(|&x| (x - 0.125).abs() < 0.02));
    }

    #[test]
    fn collapsed_samples_hit_one_mode() {
        let ring = GaussianRing::default();
        let s = Array2::from_shape_fn((100, 2), |(_, j)| if j == 0 { 2.0 } else { 0.0 });
        let f = ring.mode_fractions(&s);
        assert_eq!(f[0], 1.0);
        assert_eq!(f.iter().filter(|&&x| x > 0.0).count(), 1);
    }

    #[test]
    fn short_run_is_deterministic() {
        let cfg = ModeCoverageConfig {
            steps: 5,
            batch: 16,
            hidden: vec![8],
            eval_samples: 100,
            ..Default::default()
        };
        let a = mode_coverage(Criterion::WganDiv, 3, &cfg).unwrap();
        let b = mode_coverage(Criterion::WganDiv, 3, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
