//! Reproducible random streams and null/alternative outcome samplers.
//!
//! Replication `i` of a run seeded with `seed` always draws from ChaCha8
//! stream `i` of key `seed`, so results do not depend on how replications
//! are scheduled across workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::martingale::Family;
use crate::stats::normal_cdf;

pub type StreamRng = ChaCha8Rng;

pub fn replication_rng(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws outcome `t` (1-based) of one sequence.
pub trait OutcomeSampler: Send + Sync {
    fn family(&self) -> Family;
    fn sample(&self, t: usize, rng: &mut StreamRng) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct BernoulliSampler {
    pub p: f64,
}

impl OutcomeSampler for BernoulliSampler {
    fn family(&self) -> Family {
        Family::Bernoulli
    }

    fn sample(&self, _t: usize, rng: &mut StreamRng) -> f64 {
        if rng.random::<f64>() < self.p {
            1.0
        } else {
            0.0
        }
    }
}

/// Bernoulli(`before`) for `t ≤ change_point`, Bernoulli(`after`) afterwards.
#[derive(Debug, Clone, Copy)]
pub struct ChangePointBernoulli {
    pub before: f64,
    pub after: f64,
    pub change_point: usize,
}

impl OutcomeSampler for ChangePointBernoulli {
    fn family(&self) -> Family {
        Family::Bernoulli
    }

    fn sample(&self, t: usize, rng: &mut StreamRng) -> f64 {
        let p = if t <= self.change_point {
            self.before
        } else {
            self.after
        };
        if rng.random::<f64>() < p {
            1.0
        } else {
            0.0
        }
    }
}

/// `Φ(Z + shift)` with `Z ~ N(0, 1)`; `shift = 0` is Uniform(0, 1).
#[derive(Debug, Clone, Copy)]
pub struct NormalCdfSampler {
    pub shift: f64,
}

impl NormalCdfSampler {
    pub fn uniform() -> Self {
        Self { shift: 0.0 }
    }

    /// Shift giving `E[Φ(Z + δ)] = mean`, using `E[Φ(Z + δ)] = Φ(δ/√2)`.
    pub fn with_mean(mean: f64) -> Self {
        Self {
            shift: std::f64::consts::SQRT_2 * crate::stats::normal_quantile(mean),
        }
    }
}

impl OutcomeSampler for NormalCdfSampler {
    fn family(&self) -> Family {
        Family::BoundedMean
    }

    fn sample(&self, _t: usize, rng: &mut StreamRng) -> f64 {
        if self.shift == 0.0 {
            rng.random::<f64>()
        } else {
            let z: f64 = rng.sample(StandardNormal);
            normal_cdf(z + self.shift)
        }
    }
}

/// `Y = e^Z` with `Z ~ N(mu, 1)`.
#[derive(Debug, Clone, Copy)]
pub struct LogNormalSampler {
    pub mu: f64,
}

impl OutcomeSampler for LogNormalSampler {
    fn family(&self) -> Family {
        Family::LogNormalUnitVariance
    }

    fn sample(&self, _t: usize, rng: &mut StreamRng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        (self.mu + z).exp()
    }
}
