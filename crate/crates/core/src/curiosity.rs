//! Count-based exploration bonus over sign-hashed states.
//!
//! States are whitened, projected by a frozen Gaussian matrix and reduced to
//! the sign pattern of the projection. Each code's visit count `N` gives the
//! bonus `1/sqrt(N)`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::SimState;

#[derive(Debug, Error, PartialEq)]
pub enum CuriosityError {
    #[error("feature vector has {got} entries, expected {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("code length {got} does not match table length {expected}")]
    CodeLength { expected: u8, got: u8 },
    #[error("curiosity reward needs a count of at least 1")]
    ZeroCount,
    #[error("code length must be in 1..=64, got {0}")]
    BadLength(usize),
}

/// Sign pattern of the projected state, bit `i` set when projection row `i`
/// is non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HashCode {
    pub bits: u64,
    pub len: u8,
}

/// Curiosity features: joint positions, base velocity and pitch.
pub fn curiosity_features(s: &SimState) -> Vec<f64> {
    let mut f = s.dof_pos.clone();
    f.extend_from_slice(&s.base_lin_vel);
    f.push(s.base_pitch);
    f
}

pub fn curiosity_feature_dim(num_dof: usize) -> usize {
    num_dof + 3
}

/// Welford mean/variance that stops updating after `warmup` samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Whitener {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    warmup: u64,
}

impl Whitener {
    pub fn new(dim: usize, warmup: u64) -> Self {
        Whitener {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            warmup,
        }
    }

    pub fn frozen(&self) -> bool {
        self.count >= self.warmup
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn update(&mut self, x: &[f64]) {
        if self.frozen() {
            return;
        }
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| {
                let std = if self.count > 1 {
                    (self.m2[i] / (self.count - 1) as f64).sqrt()
                } else {
                    1.0
                };
                (v - self.mean[i]) / std.max(1e-6)
            })
            .collect()
    }
}

/// Frozen random sign projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimHash {
    dim: usize,
    rows: Vec<Vec<f64>>,
}

impl SimHash {
    pub fn new<R: Rng + ?Sized>(dim: usize, bits: usize, rng: &mut R) -> Result<Self, CuriosityError> {
        if !(1..=64).contains(&bits) {
            return Err(CuriosityError::BadLength(bits));
        }
        let rows = (0..bits)
            .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        Ok(SimHash { dim, rows })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, CuriosityError> {
        if !(1..=64).contains(&rows.len()) {
            return Err(CuriosityError::BadLength(rows.len()));
        }
        let dim = rows[0].len();
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(CuriosityError::DimMismatch { expected: dim, got: r.len() });
        }
        Ok(SimHash { dim, rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn bits(&self) -> u8 {
        self.rows.len() as u8
    }

    pub fn hash(&self, x: &[f64]) -> Result<HashCode, CuriosityError> {
        if x.len() != self.dim {
            return Err(CuriosityError::DimMismatch { expected: self.dim, got: x.len() });
        }
        let mut bits = 0u64;
        for (i, row) in self.rows.iter().enumerate() {
            let dot: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            if dot >= 0.0 {
                bits |= 1 << i;
            }
        }
        Ok(HashCode { bits, len: self.bits() })
    }
}

/// Visit counts per code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountTable {
    len: u8,
    counts: BTreeMap<u64, u64>,
    total: u64,
}

impl CountTable {
    pub fn new(len: u8) -> Self {
        CountTable {
            len,
            counts: BTreeMap::new(),
            total: 0,
        }
    }

    /// Increments the code's count and returns the new value.
    pub fn observe_and_count(&mut self, code: HashCode) -> Result<u64, CuriosityError> {
        if code.len != self.len {
            return Err(CuriosityError::CodeLength { expected: self.len, got: code.len });
        }
        let n = self.counts.entry(code.bits).or_insert(0);
        *n += 1;
        self.total += 1;
        Ok(*n)
    }

    pub fn count(&self, code: HashCode) -> u64 {
        self.counts.get(&code.bits).copied().unwrap_or(0)
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Adds another table's counts into this one.
    pub fn merge(&mut self, other: &CountTable) -> Result<(), CuriosityError> {
        if other.len != self.len {
            return Err(CuriosityError::CodeLength { expected: self.len, got: other.len });
        }
        for (&k, &v) in &other.counts {
            *self.counts.entry(k).or_insert(0) += v;
        }
        self.total += other.total;
        Ok(())
    }
}

pub fn curiosity_reward(n: u64) -> Result<f64, CuriosityError> {
    if n == 0 {
        return Err(CuriosityError::ZeroCount);
    }
    Ok(1.0 / (n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuriosityConfig {
    pub bits: usize,
    pub warmup: u64,
}

impl Default for CuriosityConfig {
    fn default() -> Self {
        CuriosityConfig { bits: 32, warmup: 10_000 }
    }
}

/// Whitener, hash and count table for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curiosity {
    whitener: Whitener,
    hash: SimHash,
    table: CountTable,
}

impl Curiosity {
    pub fn new<R: Rng + ?Sized>(dim: usize, cfg: &CuriosityConfig, rng: &mut R) -> Result<Self, CuriosityError> {
        let hash = SimHash::new(dim, cfg.bits, rng)?;
        Ok(Curiosity {
            whitener: Whitener::new(dim, cfg.warmup),
            table: CountTable::new(hash.bits()),
            hash,
        })
    }

    pub fn code(&self, features: &[f64]) -> Result<HashCode, CuriosityError> {
        self.hash.hash(&self.whitener.apply(features))
    }

    /// Records a visit and returns its bonus.
    pub fn visit(&mut self, features: &[f64]) -> Result<f64, CuriosityError> {
        if features.len() != self.hash.dim {
            return Err(CuriosityError::DimMismatch { expected: self.hash.dim, got: features.len() });
        }
        self.whitener.update(features);
        let code = self.code(features)?;
        curiosity_reward(self.table.observe_and_count(code)?)
    }

    pub fn table(&self) -> &CountTable {
        &self.table
    }

    pub fn whitener(&self) -> &Whitener {
        &self.whitener
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hasher() -> SimHash {
        SimHash::new(7, 32, &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    #[test]
    fn reward_values() {
        assert_eq!(curiosity_reward(1).unwrap(), 1.0);
        assert_eq!(curiosity_reward(4).unwrap(), 0.5);
        assert_eq!(curiosity_reward(100).unwrap(), 0.1);
        assert_eq!(curiosity_reward(0), Err(CuriosityError::ZeroCount));
        for n in 1..1000 {
            assert!(curiosity_reward(n + 1).unwrap() < curiosity_reward(n).unwrap());
        }
    }

    #[test]
    fn counting() {
        let mut t = CountTable::new(32);
        let a = HashCode { bits: 5, len: 32 };
        let b = HashCode { bits: 9, len: 32 };
        assert_eq!(t.observe_and_count(a).unwrap(), 1);
        assert_eq!(t.observe_and_count(b).unwrap(), 1);
        assert_eq!(t.observe_and_count(a).unwrap(), 2);
        assert_eq!(t.observe_and_count(b).unwrap(), 2);
        assert_eq!(t.observe_and_count(a).unwrap(), 3);
        assert_eq!(t.observe_and_count(a).unwrap(), 4);
        assert_eq!(t.total(), 6);
        assert!(t.observe_and_count(HashCode { bits: 1, len: 16 }).is_err());
    }

    #[test]
    fn negated_rows_complement() {
        let h = hasher();
        let neg = SimHash::from_rows(h.rows().iter().map(|r| r.iter().map(|v| -v).collect()).collect()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let x: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = h.hash(&x).unwrap();
            let b = neg.hash(&x).unwrap();
            assert_eq!(a.bits ^ b.bits, u32::MAX as u64);
        }
    }

    #[test]
    fn tiny_perturbation_keeps_code() {
        let h = hasher();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let same = (0..10_000)
            .filter(|_| {
                let x: Vec<f64> = (0..7).map(|_| rng.random_range(-2.0..2.0)).collect();
                let y: Vec<f64> = x.iter().map(|v| v + 1e-12).collect();
                h.hash(&x).unwrap() == h.hash(&y).unwrap()
            })
            .count();
        assert!(same >= 9_900, "{same}");
    }

    #[test]
    fn dimension_checked() {
        assert_eq!(hasher().hash(&[0.0; 3]), Err(CuriosityError::DimMismatch { expected: 7, got: 3 }));
    }

    #[test]
    fn whitener_freezes() {
        let mut w = Whitener::new(1, 3);
        for v in [1.0, 2.0, 3.0] {
            w.update(&[v]);
        }
        assert!(w.frozen());
        let before = w.apply(&[2.0]);
        w.update(&[100.0]);
        assert_eq!(w.apply(&[2.0]), before);
        assert_eq!(before, vec![0.0]);
    }

    #[test]
    fn table_survives_json() {
        let mut c = Curiosity::new(3, &CuriosityConfig { bits: 8, warmup: 2 }, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for i in 0..20 {
            c.visit(&[i as f64, 0.5, -1.0]).unwrap();
        }
        let back: Curiosity = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
