//! Predictable betting strategies.
//!
//! A strategy only ever sees [`History`], which holds `K_0..K_{t-1}` and
//! `y_1..y_{t-1}` when choosing `λ_t`; it cannot look at the outcome it bets on.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Everything observed strictly before the current round.
#[derive(Debug, Clone, Copy)]
pub struct History<'a> {
    wealth: &'a [f64],
    outcomes: &'a [f64],
}

impl<'a> History<'a> {
    pub fn new(wealth: &'a [f64], outcomes: &'a [f64]) -> Self {
        assert_eq!(
            wealth.len(),
            outcomes.len() + 1,
            "history must hold K_0..K_t alongside y_1..y_t"
        );
        Self { wealth, outcomes }
    }

    /// Number of outcomes observed so far.
    pub fn t(&self) -> usize {
        self.outcomes.len()
    }

    pub fn wealth(&self) -> &'a [f64] {
        self.wealth
    }

    pub fn outcomes(&self) -> &'a [f64] {
        self.outcomes
    }

    pub fn current_wealth(&self) -> f64 {
        self.wealth[self.wealth.len() - 1]
    }
}

pub trait BettingStrategy: Send + Sync {
    fn lambda(&self, history: &History<'_>) -> Result<f64>;
}

impl<F> BettingStrategy for F
where
    F: Fn(&History<'_>) -> Result<f64> + Send + Sync,
{
    fn lambda(&self, history: &History<'_>) -> Result<f64> {
        self(history)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategySpec {
    /// Likelihood-ratio bet for a Bernoulli null `p0` against alternative `p1`.
    Kelly {
        null_p: f64,
        alt_p: f64,
    },
    FixedLambda {
        lambda: f64,
    },
    /// Re-solved every round so the all-losses continuation ends at `floor`.
    DynamicFloor {
        floor: f64,
        horizon: usize,
        /// Least favourable `y − m`; −½ for a fair-coin or bounded null.
        worst_step: f64,
    },
    /// λ for the two-sided hedged process; as a one-sided bet it is the `+λ` leg.
    HedgedCs {
        lambda: f64,
    },
    /// `λ = e^{-1/2}` for log-normal outcomes, making every factor `e^{Z − 1/2}`.
    AllOrNothingLogNormal,
}

impl StrategySpec {
    /// The constant bet, if this strategy never adapts.
    pub fn constant_lambda(&self) -> Option<f64> {
        match *self {
            StrategySpec::Kelly { null_p, alt_p } => kelly_lambda(null_p, alt_p).ok(),
            StrategySpec::FixedLambda { lambda } | StrategySpec::HedgedCs { lambda } => {
                Some(lambda)
            }
            StrategySpec::AllOrNothingLogNormal => Some((-0.5f64).exp()),
            StrategySpec::DynamicFloor { .. } => None,
        }
    }
}

impl BettingStrategy for StrategySpec {
    fn lambda(&self, history: &History<'_>) -> Result<f64> {
        match *self {
            StrategySpec::DynamicFloor {
                floor,
                horizon,
                worst_step,
            } => dynamic_lambda_with(
                history.current_wealth(),
                history.t(),
                horizon,
                floor,
                worst_step,
            ),
            StrategySpec::Kelly { null_p, alt_p } => kelly_lambda(null_p, alt_p),
            _ => Ok(self.constant_lambda().expect("non-adaptive strategy")),
        }
    }
}

/// λ making `1 + λ(y − p0)` equal to the likelihood ratio `p1(y)/p0(y)`.
pub fn kelly_lambda(p0: f64, p1: f64) -> Result<f64> {
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::param(
            "p0",
            p0,
            "null probability must lie in (0, 1)",
        ));
    }
    if !(0.0..=1.0).contains(&p1) {
        return Err(Error::param(
            "p1",
            p1,
            "alternative probability must lie in [0, 1]",
        ));
    }
    Ok((p1 - p0) / (p0 * (1.0 - p0)))
}

/// Fixed λ whose all-losses path ends exactly at `floor` after `horizon` rounds.
pub fn conservative_lambda(floor: f64, horizon: usize, worst_step: f64) -> Result<f64> {
    if !(floor > 0.0 && floor < 1.0) {
        return Err(Error::param("floor", floor, "must lie in (0, 1)"));
    }
    if horizon == 0 {
        return Err(Error::param("horizon", 0.0, "must be positive"));
    }
    if !(worst_step < 0.0) {
        return Err(Error::param("worst_step", worst_step, "must be negative"));
    }
    Ok((1.0 - floor.powf(1.0 / horizon as f64)) / -worst_step)
}

/// Dynamic floor bet for a fair-coin null (worst step −½).
pub fn dynamic_lambda(current_wealth: f64, t: usize, horizon: usize, floor: f64) -> Result<f64> {
    dynamic_lambda_with(current_wealth, t, horizon, floor, -0.5)
}

/// Solves `floor = K_t (1 + λ·worst_step)^{horizon − t}` for λ, clamped to
/// `[0, −1/worst_step]`.
pub fn dynamic_lambda_with(
    current_wealth: f64,
    t: usize,
    horizon: usize,
    floor: f64,
    worst_step: f64,
) -> Result<f64> {
    if t >= horizon {
        return Err(Error::param("t", t as f64, "must be before the horizon"));
    }
    if !(current_wealth > 0.0) {
        return Err(Error::param(
            "current_wealth",
            current_wealth,
            "must be positive",
        ));
    }
    if !(floor > 0.0) {
        return Err(Error::param("floor", floor, "must be positive"));
    }
    if !(worst_step < 0.0) {
        return Err(Error::param("worst_step", worst_step, "must be negative"));
    }
    let remaining = (horizon - t) as f64;
    let raw = (1.0 - ((floor / current_wealth).ln() / remaining).exp()) / -worst_step;
    let max = 1.0 / -worst_step;
    if raw < 0.0 || raw > max {
        if raw < -1e-9 || raw > max + 1e-9 {
            warn!(
                "dynamic λ = {raw} outside [0, {max}] at t = {t}, K_t = {current_wealth}; clamped"
            );
        }
        return Ok(raw.clamp(0.0, max));
    }
    Ok(raw)
}
