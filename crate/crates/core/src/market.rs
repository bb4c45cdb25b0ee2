//! Market state: configuration, agents, and the unmatched pool.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::pair_uniform;

#[derive(Debug, Error, PartialEq)]
pub enum MarketError {
    #[error("invalid market config: {0}")]
    InvalidConfig(String),
    #[error("self-compatibility is undefined (agent {0})")]
    SelfCompatibility(u64),
}

/// Parameters of the log-normal sojourn distribution: `ln X ~ N(mu, sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalParams {
    pub mu: f64,
    pub sigma: f64,
}

impl LogNormalParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self, MarketError> {
        if !mu.is_finite() || !sigma.is_finite() || sigma < 0.0 {
            return Err(MarketError::InvalidConfig(format!(
                "log-normal params must be finite with sigma >= 0, got ({mu}, {sigma})"
            )));
        }
        Ok(LogNormalParams { mu, sigma })
    }

    /// Draw one sojourn time. Strictly positive; `sigma = 0` degenerates to
    /// the constant `exp(mu)`.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        (self.mu + self.sigma * z).exp()
    }
}

/// Full configuration of one market run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    /// Poisson arrival rate (agents per unit time).
    pub lambda: f64,
    /// Pairwise compatibility probability.
    pub p: f64,
    /// Horizon end T.
    pub horizon: f64,
    /// Mixing period end T0; metrics are measured over agents arriving in
    /// [T0, T].
    pub warmup: f64,
    /// Master seed; all four run streams derive from it.
    pub seed: u64,
    /// The generating sojourn distribution for this run.
    pub departure: LogNormalParams,
}

impl MarketConfig {
    pub fn validate(&self) -> Result<(), MarketError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(MarketError::InvalidConfig(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(MarketError::InvalidConfig(format!(
                "p must lie in [0, 1], got {}",
                self.p
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(MarketError::InvalidConfig(format!(
                "horizon must be finite and > 0, got {}",
                self.horizon
            )));
        }
        if !(0.0..self.horizon).contains(&self.warmup) {
            return Err(MarketError::InvalidConfig(format!(
                "warmup must satisfy 0 <= T0 < T, got T0={} T={}",
                self.warmup, self.horizon
            )));
        }
        Ok(())
    }

    /// Effective density d = p * lambda. Derived, never stored.
    pub fn density(&self) -> f64 {
        self.p * self.lambda
    }

    /// Convenience constructor with p derived from a target density.
    pub fn with_density(mut self, d: f64) -> Self {
        self.p = if self.lambda > 0.0 { d / self.lambda } else { 0.0 };
        self
    }
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig {
            lambda: 100.0,
            p: 0.08,
            horizon: 50.0,
            warmup: 25.0,
            seed: 0,
            departure: LogNormalParams { mu: -1.5, sigma: 0.5 },
        }
    }
}

/// Lifecycle of one agent. Transitions only waiting -> matched or
/// waiting -> perished.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AgentStatus {
    Waiting,
    Matched { partner: u64, time: f64 },
    Perished { time: f64 },
}

/// An arriving participant. `critical = arrival + sojourn` always.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Agent {
    pub id: u64,
    pub arrival: f64,
    pub sojourn: f64,
    pub critical: f64,
    pub status: AgentStatus,
}

impl Agent {
    pub fn new(id: u64, arrival: f64, sojourn: f64) -> Self {
        Agent {
            id,
            arrival,
            sojourn,
            critical: arrival + sojourn,
            status: AgentStatus::Waiting,
        }
    }
}

/// Counter-based pairwise compatibility sampler.
///
/// Each unordered pair maps to an i.i.d. Bernoulli(p) draw computed from a
/// stable hash of (seed, min id, max id). The mapping is pure, so repeated
/// queries return the same boolean in any order, and two runs sharing a master
/// seed share the whole compatibility graph; an explicit cache would be
/// observationally identical.
#[derive(Debug, Clone, Copy)]
pub struct PairCompat {
    seed: u64,
    p: f64,
}

impl PairCompat {
    pub fn new(seed: u64, p: f64) -> Self {
        PairCompat { seed, p }
    }

    pub fn are_compatible(&self, i: u64, j: u64) -> Result<bool, MarketError> {
        if i == j {
            return Err(MarketError::SelfCompatibility(i));
        }
        Ok(self.check(i, j))
    }

    /// Unchecked fast path for the simulation loop; callers guarantee i != j.
    #[inline]
    pub(crate) fn check(&self, i: u64, j: u64) -> bool {
        pair_uniform(self.seed, i, j) < self.p
    }
}

/// The set Z_t of currently unmatched agents, kept sorted by id so that
/// candidate scans are order-deterministic.
#[derive(Debug, Clone)]
pub struct Pool {
    active: Vec<u64>,
    pub compat: PairCompat,
}

impl Pool {
    pub fn new(compat: PairCompat) -> Self {
        Pool { active: Vec::new(), compat }
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn contains(&self, id: u64) -> bool {
        self.active.binary_search(&id).is_ok()
    }

    pub fn insert(&mut self, id: u64) {
        if let Err(pos) = self.active.binary_search(&id) {
            self.active.insert(pos, id);
        }
    }

    pub fn remove(&mut self, id: u64) {
        if let Ok(pos) = self.active.binary_search(&id) {
            self.active.remove(pos);
        }
    }

    /// Waiting agents compatible with `agent`, ascending by id, excluding the
    /// agent itself.
    pub fn compatible_candidates(&self, agent: u64) -> Vec<u64> {
        self.active
            .iter()
            .copied()
            .filter(|&other| other != agent && self.compat.check(agent, other))
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        self.active.iter().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation_rejects_bad_fields() {
        let ok = MarketConfig::default();
        assert!(ok.validate().is_ok());
        let mut bad = ok;
        bad.p = 1.5;
        assert!(bad.validate().is_err());
        let mut bad = ok;
        bad.warmup = ok.horizon;
        assert!(bad.validate().is_err());
        let mut bad = ok;
        bad.lambda = f64::NAN;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn density_is_derived() {
        let cfg = MarketConfig { lambda: 100.0, p: 0.08, ..Default::default() };
        assert!((cfg.density() - 8.0).abs() < 1e-12);
        let cfg = cfg.with_density(4.0);
        assert!((cfg.p - 0.04).abs() < 1e-12);
    }

    #[test]
    fn degenerate_lognormal_is_constant() {
        let params = LogNormalParams::new(0.0, 0.0).unwrap();
        let mut rng = crate::rng::Streams::from_master(1).sojourns;
        for _ in 0..16 {
            assert_eq!(params.sample(&mut rng), 1.0);
        }
    }

    #[test]
    fn lognormal_rejects_negative_sigma() {
        assert!(LogNormalParams::new(0.0, -0.1).is_err());
    }

    #[test]
    fn self_compatibility_is_an_error() {
        let pc = PairCompat::new(3, 0.5);
        assert_eq!(pc.are_compatible(4, 4), Err(MarketError::SelfCompatibility(4)));
    }

    #[test]
    fn compat_extremes() {
        let all = PairCompat::new(11, 1.0);
        let none = PairCompat::new(11, 0.0);
        for i in 0..20u64 {
            for j in (i + 1)..20u64 {
                assert!(all.are_compatible(i, j).unwrap());
                assert!(!none.are_compatible(i, j).unwrap());
            }
        }
    }

    #[test]
    fn compat_symmetry_and_stability() {
        let pc = PairCompat::new(77, 0.3);
        for i in 0..40u64 {
            for j in (i + 1)..40u64 {
                let a = pc.are_compatible(i, j).unwrap();
                assert_eq!(a, pc.are_compatible(j, i).unwrap());
                assert_eq!(a, pc.are_compatible(i, j).unwrap());
            }
        }
    }

    #[test]
    fn compat_empirical_rate_matches_p() {
        // 10^5 distinct pairs at p = 0.05: keep the fraction inside a +-5
        // sigma binomial band.
        let pc = PairCompat::new(123, 0.05);
        let mut hits = 0u64;
        let n = 100_000u64;
        for k in 0..n {
            let i = 2 * k;
            let j = 2 * k + 1;
            if pc.are_compatible(i, j).unwrap() {
                hits += 1;
            }
        }
        let frac = hits as f64 / n as f64;
        assert!((0.0466..=0.0534).contains(&frac), "fraction {frac} outside band");
    }

    #[test]
    fn pool_scan_is_sorted_and_self_free() {
        let mut pool = Pool::new(PairCompat::new(5, 1.0));
        for id in [9u64, 2, 7, 4] {
            pool.insert(id);
        }
        assert_eq!(pool.compatible_candidates(7), vec![2, 4, 9]);
        pool.remove(4);
        assert_eq!(pool.compatible_candidates(7), vec![2, 9]);
        assert_eq!(pool.len(), 3);
    }
}
