//! Transition discriminator and style reward.
//!
//! Two training criteria are supported: the least-squares objective used by
//! AMP and a Wasserstein-divergence objective whose gradient-norm penalty is
//! differentiated exactly through [`NetParams::input_gradient_backward`].

mod modes;

pub use modes::{mode_coverage, GaussianRing, ModeCoverage, ModeCoverageConfig};

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::net::{Activation, Adam, GradTape, NetError, NetParams, NetSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Lsgan,
    WganDiv,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Lsgan => "lsgan",
            Criterion::WganDiv => "wgan_div",
        })
    }
}

impl FromStr for Criterion {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lsgan" => Ok(Criterion::Lsgan),
            "wgan_div" => Ok(Criterion::WganDiv),
            _ => Err(format!("unknown criterion {s:?} (expected lsgan or wgan_div)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMap {
    LsganQuadratic,
    BoundedSigmoid,
}

impl fmt::Display for RewardMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewardMap::LsganQuadratic => "lsgan_quadratic",
            RewardMap::BoundedSigmoid => "bounded_sigmoid",
        })
    }
}

impl FromStr for RewardMap {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lsgan_quadratic" => Ok(RewardMap::LsganQuadratic),
            "bounded_sigmoid" => Ok(RewardMap::BoundedSigmoid),
            _ => Err(format!("unknown reward map {s:?} (expected lsgan_quadratic or bounded_sigmoid)")),
        }
    }
}

impl Criterion {
    /// Reward map paired with the criterion by default.
    pub fn default_map(self) -> RewardMap {
        match self {
            Criterion::Lsgan => RewardMap::LsganQuadratic,
            Criterion::WganDiv => RewardMap::BoundedSigmoid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryConfig {
    pub criterion: Criterion,
    pub wgan_k: f64,
    pub wgan_p: f64,
    pub style_weight: f64,
    pub reward_map: RewardMap,
    pub updates_per_iter: usize,
    pub grad_clip: f64,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub batch_size: usize,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        AdversaryConfig {
            criterion: Criterion::Lsgan,
            wgan_k: 2.0,
            wgan_p: 6.0,
            style_weight: 1.0,
            reward_map: RewardMap::LsganQuadratic,
            updates_per_iter: 2,
            grad_clip: 10.0,
            lr: 3e-4,
            hidden: vec![256, 128],
            batch_size: 512,
        }
    }
}

impl AdversaryConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.wgan_k >= 0.0) {
            return Err(format!("adversary.wgan_k must be >= 0, got {}", self.wgan_k));
        }
        if !(self.wgan_p >= 1.0) {
            return Err(format!("adversary.wgan_p must be >= 1, got {}", self.wgan_p));
        }
        if !(self.style_weight >= 0.0) {
            return Err(format!("adversary.style_weight must be >= 0, got {}", self.style_weight));
        }
        if !(self.grad_clip > 0.0) || !(self.lr > 0.0) {
            return Err("adversary.grad_clip and adversary.lr must be > 0".into());
        }
        if self.batch_size == 0 || self.hidden.contains(&0) {
            return Err("adversary.batch_size and hidden widths must be positive".into());
        }
        Ok(())
    }
}

/// Discriminator outputs for each row of `x`.
pub fn critic_score(params: &NetParams, x: ArrayView2<f64>) -> Result<Array1<f64>, NetError> {
    Ok(params.predict(x)?.column(0).to_owned())
}

fn check_batches(real: &ArrayView2<f64>, fake: &ArrayView2<f64>) -> Result<(), NetError> {
    if real.nrows() == 0 || fake.nrows() == 0 {
        return Err(NetError::EmptyBatch);
    }
    Ok(())
}

/// `E_real[(D-1)^2] + E_fake[(D+1)^2]`.
pub fn lsgan_loss(params: &NetParams, real: ArrayView2<f64>, fake: ArrayView2<f64>) -> Result<(f64, GradTape), NetError> {
    check_batches(&real, &fake)?;
    let mut tape = GradTape::zeros_like(params);
    let mut loss = 0.0;
    for (x, target) in [(real, 1.0), (fake, -1.0)] {
        let cache = params.forward(x)?;
        let d = cache.output();
        let n = x.nrows() as f64;
        loss += d.iter().map(|v| (v - target) * (v - target)).sum::<f64>() / n;
        let g = d.mapv(|v| 2.0 * (v - target) / n);
        tape.accumulate(&params.backward(&cache, g.view())?, 1.0);
    }
    Ok((loss, tape))
}

/// Interpolates `eps_i real_i + (1 - eps_i) fake_{π(i)}` for a random pairing `π`.
pub fn sample_interpolates<R: Rng + ?Sized>(real: ArrayView2<f64>, fake: ArrayView2<f64>, rng: &mut R) -> Array2<f64> {
    let n = real.nrows();
    let mut pairing: Vec<usize> = (0..n).map(|i| i % fake.nrows()).collect();
    pairing.shuffle(rng);
    let mut out = Array2::zeros(real.dim());
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let eps: f64 = rng.random();
        let f = fake.row(pairing[i]);
        for ((o, r), fv) in row.iter_mut().zip(real.row(i)).zip(f) {
            *o = eps * r + (1.0 - eps) * fv;
        }
    }
    out
}

/// WGAN-div loss with fixed interpolates: `E_fake[D] - E_real[D] + k E[|∇D(x̂)|^p]`.
pub fn wgan_div_loss_at(
    params: &NetParams,
    real: ArrayView2<f64>,
    fake: ArrayView2<f64>,
    interp: ArrayView2<f64>,
    k: f64,
    p: f64,
) -> Result<(f64, GradTape), NetError> {
    check_batches(&real, &fake)?;
    if interp.nrows() == 0 {
        return Err(NetError::EmptyBatch);
    }
    let mut tape = GradTape::zeros_like(params);
    let mut loss = 0.0;
    for (x, sign) in [(fake, 1.0), (real, -1.0)] {
        let cache = params.forward(x)?;
        let n = x.nrows() as f64;
        loss += sign * cache.output().sum() / n;
        let g = Array2::from_elem((x.nrows(), 1), sign / n);
        tape.accumulate(&params.backward(&cache, g.view())?, 1.0);
    }
    if k > 0.0 {
        let (penalty, grad) = gradient_penalty(params, interp, k, p)?;
        loss += penalty;
        tape.accumulate(&grad, 1.0);
    }
    Ok((loss, tape))
}

/// `k E[|∇_x D(x̂)|^p]` and its parameter gradient.
pub fn gradient_penalty(params: &NetParams, interp: ArrayView2<f64>, k: f64, p: f64) -> Result<(f64, GradTape), NetError> {
    let cache = params.input_gradient_cached(interp)?;
    let g = cache.input_gradient();
    let n = interp.nrows() as f64;
    let mut value = 0.0;
    let mut adjoint = Array2::zeros(g.dim());
    for (row, mut adj) in g.axis_iter(Axis(0)).zip(adjoint.axis_iter_mut(Axis(0))) {
        let norm = row.dot(&row).sqrt();
        value += norm.powf(p);
        if norm > 0.0 {
            // d|g|^p/dg = p |g|^(p-2) g
            let c = k * p * norm.powf(p - 2.0) / n;
            adj.zip_mut_with(&row, |a, &gv| *a = c * gv);
        }
    }
    let tape = params.input_gradient_backward(&cache, adjoint.view())?;
    Ok((k * value / n, tape))
}

pub fn wgan_div_loss<R: Rng + ?Sized>(
    params: &NetParams,
    real: ArrayView2<f64>,
    fake: ArrayView2<f64>,
    k: f64,
    p: f64,
    rng: &mut R,
) -> Result<(f64, GradTape), NetError> {
    check_batches(&real, &fake)?;
    let interp = sample_interpolates(real, fake, rng);
    wgan_div_loss_at(params, real, fake, interp.view(), k, p)
}

/// Maps a discriminator score to a reward in `[0, 1]`.
pub fn style_reward(score: f64, map: RewardMap) -> f64 {
    match map {
        RewardMap::LsganQuadratic => (1.0 - 0.25 * (score - 1.0) * (score - 1.0)).max(0.0),
        RewardMap::BoundedSigmoid => 1.0 / (1.0 + (-score).exp()),
    }
}

pub const STYLE_BINS: usize = 50;

/// Summary of one iteration's style rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleStats {
    pub count: u64,
    pub mean: f64,
    pub std: f64,
    /// Counts over `STYLE_BINS` equal bins of `[0, 1]`; 1.0 falls in the last bin.
    pub hist: Vec<u64>,
}

pub fn style_bin(r: f64) -> usize {
    ((r * STYLE_BINS as f64).floor().max(0.0) as usize).min(STYLE_BINS - 1)
}

impl StyleStats {
    pub fn from_rewards(rs: &[f64]) -> Self {
        let mut hist = vec![0u64; STYLE_BINS];
        for &r in rs {
            hist[style_bin(r)] += 1;
        }
        let n = rs.len() as f64;
        let (mean, std) = if rs.is_empty() {
            (0.0, 0.0)
        } else {
            let m = rs.iter().sum::<f64>() / n;
            (m, (rs.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / n).sqrt())
        };
        StyleStats {
            count: rs.len() as u64,
            mean,
            std,
            hist,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiscStats {
    pub loss: f64,
    pub real_score: f64,
    pub fake_score: f64,
    pub grad_norm: f64,
    pub skipped: usize,
}

/// Discriminator network with its optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub params: NetParams,
    pub adam: Adam,
    pub cfg: AdversaryConfig,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(input: usize, cfg: AdversaryConfig, rng: &mut R) -> Result<Self, NetError> {
        let spec = NetSpec::mlp(input, &cfg.hidden, 1, Activation::Elu);
        let params = NetParams::init(spec, 0.1, rng)?;
        let adam = Adam::new(&params, cfg.lr);
        Ok(Discriminator { params, adam, cfg })
    }

    pub fn input_width(&self) -> usize {
        self.params.spec.input_width()
    }

    pub fn loss<R: Rng + ?Sized>(&self, real: ArrayView2<f64>, fake: ArrayView2<f64>, rng: &mut R) -> Result<(f64, GradTape), NetError> {
        match self.cfg.criterion {
            Criterion::Lsgan => lsgan_loss(&self.params, real, fake),
            Criterion::WganDiv => wgan_div_loss(&self.params, real, fake, self.cfg.wgan_k, self.cfg.wgan_p, rng),
        }
    }

    /// One clipped optimizer step. Non-finite losses skip the step.
    pub fn update<R: Rng + ?Sized>(&mut self, real: ArrayView2<f64>, fake: ArrayView2<f64>, rng: &mut R) -> Result<DiscStats, NetError> {
        let (loss, mut grad) = self.loss(real, fake, rng)?;
        let mut stats = DiscStats {
            loss,
            real_score: critic_score(&self.params, real)?.mean().unwrap_or(0.0),
            fake_score: critic_score(&self.params, fake)?.mean().unwrap_or(0.0),
            ..Default::default()
        };
        if !loss.is_finite() || !grad.is_finite() {
            stats.skipped = 1;
            return Ok(stats);
        }
        stats.grad_norm = grad.clip_norm(self.cfg.grad_clip);
        self.adam.step(&mut self.params, &grad)?;
        Ok(stats)
    }

    pub fn scores(&self, x: ArrayView2<f64>) -> Result<Array1<f64>, NetError> {
        critic_score(&self.params, x)
    }

    pub fn rewards(&self, x: ArrayView2<f64>) -> Result<Vec<f64>, NetError> {
        Ok(self.scores(x)?.iter().map(|&s| style_reward(s, self.cfg.reward_map)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_net(seed: u64) -> NetParams {
        let spec = NetSpec::mlp(3, &[5, 4], 1, Activation::Tanh);
        NetParams::init(spec, 1.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn zero_net_scores_zero_and_lsgan_is_two() {
        let p = NetParams::zeros(NetSpec::mlp(3, &[4], 1, Activation::Tanh)).unwrap();
        let x = array![[1.0, 2.0, 3.0], [-1.0, 0.0, 0.5]];
        assert_eq!(critic_score(&p, x.view()).unwrap(), array![0.0, 0.0]);
        let (l, _) = lsgan_loss(&p, x.view(), x.view()).unwrap();
        assert_eq!(l, 2.0);
        let (w, _) = wgan_div_loss(&p, x.view(), x.view(), 0.0, 6.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(w, 0.0);
    }

    #[test]
    fn perfect_lsgan_discriminator_has_zero_loss() {
        // identity output D(x) = x0
        let mut p = NetParams::zeros(NetSpec::mlp(1, &[], 1, Activation::Tanh)).unwrap();
        p.layers[0].w[[0, 0]] = 1.0;
        let real = array![[1.0], [1.0]];
        let fake = array![[-1.0]];
        assert_eq!(lsgan_loss(&p, real.view(), fake.view()).unwrap().0, 0.0);
    }

    #[test]
    fn batch_scores_match_single_rows() {
        let p = small_net(1);
        let x = array![[0.1, 0.2, 0.3], [1.0, -1.0, 0.5], [0.0, 0.0, 0.0]];
        let all = critic_score(&p, x.view()).unwrap();
        for i in 0..3 {
            let one = critic_score(&p, x.slice(ndarray::s![i..i + 1, ..])).unwrap();
            assert_eq!(one[0], all[i]);
        }
    }

    #[test]
    fn linear_critic_penalty_is_k_norm_pow_p() {
        let mut p = NetParams::zeros(NetSpec::mlp(3, &[], 1, Activation::Tanh)).unwrap();
        p.layers[0].w.assign(&array![[0.3, -0.4, 1.2]]);
        let x = array![[0.1, 0.2, 0.3], [5.0, -1.0, 0.0]];
        let (pen, _) = gradient_penalty(&p, x.view(), 2.0, 6.0).unwrap();
        let norm: f64 = (0.09f64 + 0.16 + 1.44).sqrt();
        assert!((pen - 2.0 * norm.powi(6)).abs() < 1e-12);
    }

    #[test]
    fn penalty_positive_with_nonzero_gradient() {
        let p = small_net(4);
        let x = array![[0.1, 0.2, 0.3]];
        assert!(gradient_penalty(&p, x.view(), 0.5, 2.0).unwrap().0 > 0.0);
    }

    fn fd_check(p: &NetParams, loss: impl Fn(&NetParams) -> f64, grad: &[f64], tol: f64) {
        let base = p.flat();
        let h = 1e-6;
        let mut q = p.clone();
        for i in 0..base.len() {
            let mut v = base.clone();
            v[i] += h;
            q.set_flat(&v).unwrap();
            let up = loss(&q);
            v[i] -= 2.0 * h;
            q.set_flat(&v).unwrap();
            let down = loss(&q);
            let fd = (up - down) / (2.0 * h);
            let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
            assert!(err < tol, "param {i}: fd {fd} analytic {}", grad[i]);
        }
    }

    #[test]
    fn lsgan_gradient_matches_fd() {
        let p = small_net(2);
        let real = array![[0.1, 0.2, 0.3], [1.0, -1.0, 0.5]];
        let fake = array![[0.3, 0.0, -0.2], [0.5, 0.5, 0.5], [-1.0, 0.2, 0.1]];
        let (_, g) = lsgan_loss(&p, real.view(), fake.view()).unwrap();
        fd_check(&p, |q| lsgan_loss(q, real.view(), fake.view()).unwrap().0, &g.flat(), 1e-4);
    }

    #[test]
    fn wgan_div_gradient_matches_fd() {
        let p = small_net(3);
        let real = array![[0.1, 0.2, 0.3], [1.0, -1.0, 0.5]];
        let fake = array![[0.3, 0.0, -0.2], [0.5, 0.5, 0.5]];
        let interp = sample_interpolates(real.view(), fake.view(), &mut ChaCha8Rng::seed_from_u64(5));
        let f = |q: &NetParams| wgan_div_loss_at(q, real.view(), fake.view(), interp.view(), 2.0, 6.0).unwrap().0;
        let (_, g) = wgan_div_loss_at(&p, real.view(), fake.view(), interp.view(), 2.0, 6.0).unwrap();
        fd_check(&p, f, &g.flat(), 1e-3);
    }

    #[test]
    fn interpolates_lie_between_pairs() {
        let real = array![[0.0, 0.0], [0.0, 0.0]];
        let fake = array![[1.0, 1.0], [1.0, 1.0]];
        let x = sample_interpolates(real.view(), fake.view(), &mut ChaCha8Rng::seed_from_u64(0));
        for row in x.rows() {
            assert!((0.0..=1.0).contains(&row[0]));
            assert_eq!(row[0], row[1]);
        }
    }

    #[test]
    fn empty_batch_rejected() {
        let p = small_net(0);
        let real = Array2::<f64>::zeros((0, 3));
        let fake = array![[0.0, 0.0, 0.0]];
        assert!(matches!(lsgan_loss(&p, real.view(), fake.view()), Err(NetError::EmptyBatch)));
    }

    #[test]
    fn reward_maps() {
        assert_eq!(style_reward(1.0, RewardMap::LsganQuadratic), 1.0);
        assert_eq!(style_reward(-1.0, RewardMap::LsganQuadratic), 0.0);
        assert_eq!(style_reward(0.0, RewardMap::BoundedSigmoid), 0.5);
        for s in [-1e6, -3.0, 0.3, 2.5, 7.0, 1e6] {
            for m in [RewardMap::LsganQuadratic, RewardMap::BoundedSigmoid] {
                assert!((0.0..=1.0).contains(&style_reward(s, m)));
            }
        }
    }

    #[test]
    fn style_stats_bins() {
        let s = StyleStats::from_rewards(&[0.5; 10]);
        assert_eq!(s.std, 0.0);
        assert_eq!(s.hist.iter().filter(|&&c| c > 0).count(), 1);
        let t = StyleStats::from_rewards(&[0.2, 0.8, 0.2, 0.8]);
        assert!((t.mean - 0.5).abs() < 1e-15);
        assert_eq!(t.hist.iter().filter(|&&c| c > 0).count(), 2);
        assert_eq!(style_bin(1.0), STYLE_BINS - 1);
        assert_eq!(style_bin(0.0), 0);
    }

    #[test]
    fn names_round_trip() {
        for c in [Criterion::Lsgan, Criterion::WganDiv] {
            assert_eq!(c.to_string().parse::<Criterion>().unwrap(), c);
        }
        for m in [RewardMap::LsganQuadratic, RewardMap::BoundedSigmoid] {
            assert_eq!(m.to_string().parse::<RewardMap>().unwrap(), m);
        }
        assert!("hinge".parse::<Criterion>().is_err());
    }
}
