//! Test wealth processes, their cash flows, and the anytime-valid decision rule.
//!
//! Every process here has the universal form
//!
//! ```text
//! K_t = K_{t-1} * (1 + λ_t (Y_t - m))
//! ```
//!
//! where `m` is the conditional null mean of the outcome and `λ_t` is chosen
//! from the history strictly before `t`. Under the null `K` is a nonnegative
//! martingale started at 1, so by Ville's inequality
//! `P(∃t: K_t ≥ 1/α) ≤ α`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::strategy::{BettingStrategy, History};

/// Slack allowed when checking a bet against the admissible range, so that
/// closed-form boundary bets (λ = 2, λ = e^{-1/2}) are not rejected by rounding.
const LAMBDA_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Outcomes in {0, 1}.
    Bernoulli,
    /// `Y = e^Z` with `Z ~ N(μ, 1)`; null `μ = 0`.
    LogNormalUnitVariance,
    /// Outcomes in `[0, 1]` with a null mean.
    BoundedMean,
}

impl Family {
    /// Smallest and largest attainable outcome.
    pub fn support(self) -> (f64, f64) {
        match self {
            Family::Bernoulli | Family::BoundedMean => (0.0, 1.0),
            Family::LogNormalUnitVariance => (0.0, f64::INFINITY),
        }
    }

    pub fn check_outcome(self, y: f64) -> Result<()> {
        let ok = match self {
            Family::Bernoulli => y == 0.0 || y == 1.0,
            Family::BoundedMean => (0.0..=1.0).contains(&y),
            Family::LogNormalUnitVariance => y > 0.0 && y.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidOutcome {
                value: y,
                family: self,
            })
        }
    }
}

/// A simple null (and optional simple alternative) for one outcome family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSpec {
    pub family: Family,
    /// `p` for Bernoulli, `μ = 0` for log-normal, the mean for bounded outcomes.
    pub null_param: f64,
    pub alt_param: Option<f64>,
    /// Conditional expectation of the outcome under the null.
    pub null_mean: f64,
}

impl HypothesisSpec {
    pub fn bernoulli(null_p: f64, alt_p: Option<f64>) -> Result<Self> {
        if !(0.0..=1.0).contains(&null_p) {
            return Err(Error::param("null_p", null_p, "must lie in [0, 1]"));
        }
        if let Some(q) = alt_p {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::param("alt_p", q, "must lie in [0, 1]"));
            }
        }
        Ok(Self {
            family: Family::Bernoulli,
            null_param: null_p,
            alt_param: alt_p,
            null_mean: null_p,
        })
    }

    /// `H0: μ = 0` for `Z ~ N(μ, 1)`, tested through `Y = e^Z` whose null mean is `e^{1/2}`.
    pub fn log_normal(alt_mu: Option<f64>) -> Self {
        Self {
            family: Family::LogNormalUnitVariance,
            null_param: 0.0,
            alt_param: alt_mu,
            null_mean: 0.5f64.exp(),
        }
    }

    pub fn bounded_mean(null_mean: f64) -> Result<Self> {
        if !(0.0 < null_mean && null_mean < 1.0) {
            return Err(Error::param("null_mean", null_mean, "must lie in (0, 1)"));
        }
        Ok(Self {
            family: Family::BoundedMean,
            null_param: null_mean,
            alt_param: None,
            null_mean,
        })
    }

    /// Closed interval of bets that keep `1 + λ (y - m) ≥ 0` over the support.
    pub fn lambda_range(&self) -> (f64, f64) {
        let (lo_y, hi_y) = self.family.support();
        let m = self.null_mean;
        let lower = if hi_y.is_finite() && hi_y > m {
            -1.0 / (hi_y - m)
        } else if hi_y.is_finite() {
            f64::NEG_INFINITY
        } else {
            0.0
        };
        let upper = if m > lo_y {
            1.0 / (m - lo_y)
        } else {
            f64::INFINITY
        };
        (lower, upper)
    }

    pub fn check_lambda(&self, lambda: f64) -> Result<()> {
        let (lo, hi) = self.lambda_range();
        let tol = LAMBDA_SLACK * lambda.abs().max(1.0);
        if lambda.is_finite() && lambda >= lo - tol && lambda <= hi + tol {
            Ok(())
        } else {
            Err(Error::InadmissibleBet {
                lambda,
                family: self.family,
            })
        }
    }

    /// Outcome minus null mean for the least favourable outcome.
    pub fn worst_step(&self) -> f64 {
        self.family.support().0 - self.null_mean
    }
}

/// One multiplicative update `k_prev · (1 + λ (y − m))`.
pub fn update_wealth(k_prev: f64, lambda: f64, y: f64, hyp: &HypothesisSpec) -> Result<f64> {
    if !(k_prev >= 0.0) {
        return Err(Error::param("k_prev", k_prev, "wealth must be nonnegative"));
    }
    hyp.check_lambda(lambda)?;
    let factor = 1.0 + lambda * (y - hyp.null_mean);
    // Admissible boundary bets can round a zero factor to -1e-17.
    Ok((k_prev * factor).max(0.0))
}

/// A realized test wealth process `K_0 = 1, K_1, …, K_T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WealthPath {
    values: Vec<f64>,
    lambdas: Vec<f64>,
    null_mean: f64,
}

impl WealthPath {
    pub(crate) fn from_parts(values: Vec<f64>, lambdas: Vec<f64>, null_mean: f64) -> Self {
        debug_assert_eq!(values.len(), lambdas.len() + 1);
        Self {
            values,
            lambdas,
            null_mean,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Bets `λ_1..λ_T`; `lambdas()[t - 1]` produced `values()[t]`.
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn null_mean(&self) -> f64 {
        self.null_mean
    }

    pub fn steps(&self) -> usize {
        self.lambdas.len()
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("path always holds K_0")
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// True once wealth has hit exactly zero; it stays there.
    pub fn is_ruined(&self) -> bool {
        self.terminal() == 0.0
    }

    pub fn cash_flow(&self) -> CashFlow {
        cash_flow(&self.values).expect("path always holds K_0")
    }

    pub fn decide(&self, alpha: f64) -> Result<TestDecision> {
        ville_decide(&self.values, alpha)
    }
}

/// Runs `strategy` over a fixed outcome sequence.
pub fn run_process(
    strategy: &dyn BettingStrategy,
    outcomes: &[f64],
    hyp: &HypothesisSpec,
) -> Result<WealthPath> {
    run_process_with(strategy, hyp, outcomes.len(), |t| outcomes[t - 1])
}

/// Runs `strategy` for `steps` rounds, drawing outcome `t` (1-based) from
/// `next_outcome` only after `λ_t` has been fixed.
pub fn run_process_with(
    strategy: &dyn BettingStrategy,
    hyp: &HypothesisSpec,
    steps: usize,
    mut next_outcome: impl FnMut(usize) -> f64,
) -> Result<WealthPath> {
    let mut values = Vec::with_capacity(steps + 1);
    let mut lambdas = Vec::with_capacity(steps);
    let mut seen = Vec::with_capacity(steps);
    values.push(1.0);
    for t in 1..=steps {
        let k_prev = values[t - 1];
        let lambda = if k_prev == 0.0 {
            0.0
        } else {
            strategy.lambda(&History::new(&values, &seen))?
        };
        let y = next_outcome(t);
        hyp.family.check_outcome(y)?;
        let k = if k_prev == 0.0 {
            0.0
        } else {
            update_wealth(k_prev, lambda, y, hyp)?
        };
        lambdas.push(lambda);
        values.push(k);
        seen.push(y);
    }
    Ok(WealthPath::from_parts(values, lambdas, hyp.null_mean))
}

fn check_hedged_lambda(lambda: f64) -> Result<()> {
    if (0.0..=2.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::param(
            "lambda",
            lambda,
            "hedged bets need λ in [0, 2]",
        ))
    }
}

/// Hedged two-sided capital process for bounded outcomes with null mean 1/2:
///
/// ```text
/// K_t = ½ ∏ (1 + λ (Y_s − ½)) + ½ ∏ (1 − λ (Y_s − ½))
/// ```
pub fn run_hedged_cs(outcomes: &[f64], lambda: f64) -> Result<WealthPath> {
    check_hedged_lambda(lambda)?;
    for &y in outcomes {
        Family::BoundedMean.check_outcome(y)?;
    }
    let values = hedged_cs_values(outcomes, lambda, 1.0);
    Ok(WealthPath::from_parts(
        values,
        vec![lambda; outcomes.len()],
        0.5,
    ))
}

/// Hedged process values starting from `initial` (split equally between legs).
pub(crate) fn hedged_cs_values(outcomes: &[f64], lambda: f64, initial: f64) -> Vec<f64> {
    let mut up = 0.5 * initial;
    let mut down = 0.5 * initial;
    let mut values = Vec::with_capacity(outcomes.len() + 1);
    values.push(initial);
    for &y in outcomes {
        let x = y - 0.5;
        up = (up * (1.0 + lambda * x)).max(0.0);
        down = (down * (1.0 - lambda * x)).max(0.0);
        values.push(up + down);
    }
    values
}

/// Cash flow of a wealth process: one-step increments plus the final sale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CashFlow {
    pub initial: f64,
    /// `c_t = K_t − K_{t−1}` for `t = 1..T`.
    pub increments: Vec<f64>,
    pub terminal_value: f64,
}

impl CashFlow {
    /// Sum of increments; with a zero discount rate this is the net present
    /// value of the flows excluding the final sale.
    pub fn total(&self) -> f64 {
        self.increments.iter().sum()
    }
}

pub fn cash_flow(values: &[f64]) -> Result<CashFlow> {
    let (&initial, _) = values
        .split_first()
        .ok_or_else(|| Error::Malformed("empty wealth path".into()))?;
    Ok(CashFlow {
        initial,
        increments: values.windows(2).map(|w| w[1] - w[0]).collect(),
        terminal_value: *values.last().unwrap(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestDecision {
    pub rejected: bool,
    pub crossing_time: Option<usize>,
    pub threshold: f64,
}

/// Rejects the null at the first `t` with `K_t ≥ 1/α`.
pub fn ville_decide(values: &[f64], alpha: f64) -> Result<TestDecision> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param("alpha", alpha, "must lie in (0, 1)"));
    }
    let threshold = 1.0 / alpha;
    let crossing_time = values.iter().position(|&k| k >= threshold);
    Ok(TestDecision {
        rejected: crossing_time.is_some(),
        crossing_time,
        threshold,
    })
}
