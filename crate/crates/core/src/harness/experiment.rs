use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::martingale::{run_process_with, ville_decide, HypothesisSpec};
use crate::pricing::{lattice_price, lattice_values, solve_hedge_strike, Contract, LatticeModel};
use crate::rng::{replication_rng, OutcomeSampler};

use super::config::{ExperimentConfig, HedgeSpec, StrikeMode, Truth};
use super::metrics::{EpisodeRecord, RiskReport};

/// Terms of the protective put bought at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HedgeQuote {
    pub strike: f64,
    pub premium: f64,
    pub expiry: usize,
    /// Fraction of initial wealth left in the test after paying for the
    /// protection on that same fraction: `1 − premium`.
    pub stake: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub hedge: Option<HedgeQuote>,
    pub report: RiskReport,
    pub episodes: Vec<EpisodeRecord>,
}

/// Prices the configured put on the constant-bet lattice.
pub fn quote_hedge(
    hypothesis: &HypothesisSpec,
    lambda: f64,
    hedge: &HedgeSpec,
    floor: f64,
) -> Result<HedgeQuote> {
    let model = LatticeModel::for_constant_bet(hypothesis, lambda, hedge.expiry)?;
    let strike = match hedge.strike {
        StrikeMode::Explicit(s) => s,
        StrikeMode::SolveForFloor => solve_hedge_strike(&model, floor, hedge.expiry)?[0],
    };
    let contract = Contract::put(strike, hedge.expiry)?;
    let premium = lattice_price(&model, &contract, 1.0)?.value;
    if premium >= 1.0 {
        return Err(Error::param(
            "strike",
            strike,
            "put costs all of the initial wealth",
        ));
    }
    Ok(HedgeQuote {
        strike,
        premium,
        expiry: hedge.expiry,
        stake: 1.0 - premium,
    })
}

struct HedgePlan {
    quote: HedgeQuote,
    lambda: f64,
    /// Put value at node `(t, ups)` for `t ≤ expiry`.
    put_values: Vec<Vec<f64>>,
}

/// Runs every replication of `config` and summarises the risk.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let plan = match &config.hedge {
        None => None,
        Some(h) => {
            let lambda = config
                .strategy
                .constant_lambda()
                .ok_or_else(|| Error::Config("hedges need a constant-bet strategy".into()))?;
            let quote = quote_hedge(&config.hypothesis, lambda, h, config.ruin_level)?;
            let model = LatticeModel::for_constant_bet(&config.hypothesis, lambda, h.expiry)?;
            let put_values = lattice_values(&model, &Contract::put(quote.strike, h.expiry)?, 1.0)?;
            Some(HedgePlan {
                quote,
                lambda,
                put_values,
            })
        }
    };
    let episodes = (0..config.replications)
        .into_par_iter()
        .map(|i| match &plan {
            None => unhedged_episode(config, i),
            Some(p) => hedged_episode(config, p, i),
        })
        .collect::<Result<Vec<_>>>()?;
    let report = RiskReport::from_episodes(&episodes, config.quantile, config.ruin_level)?;
    Ok(ExperimentOutput {
        config: *config,
        hedge: plan.map(|p| p.quote),
        report,
        episodes,
    })
}

/// Same experiment with outcomes drawn from Bernoulli(`before`) up to
/// `change_point` and from the original truth afterwards.
pub fn run_shift_experiment(
    config: &ExperimentConfig,
    before: f64,
    change_point: usize,
) -> Result<ExperimentOutput> {
    let after = match config.truth {
        Truth::Bernoulli { p } => p,
        Truth::ChangePoint { after, .. } => after,
    };
    let shifted = ExperimentConfig {
        truth: Truth::ChangePoint {
            before,
            after,
            change_point,
        },
        ..*config
    };
    run_experiment(&shifted)
}

fn record(index: usize, totals: &[f64], alpha: f64) -> Result<EpisodeRecord> {
    let decision = ville_decide(totals, alpha)?;
    Ok(EpisodeRecord {
        replication: index,
        final_wealth: totals[totals.len() - 1],
        max_wealth: totals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        rejected: decision.rejected,
        crossing_time: decision.crossing_time,
    })
}

fn unhedged_episode(config: &ExperimentConfig, index: usize) -> Result<EpisodeRecord> {
    let mut rng = replication_rng(config.seed, index as u64);
    let path = run_process_with(&config.strategy, &config.hypothesis, config.horizon, |t| {
        config.truth.sample(t, &mut rng)
    })?;
    record(index, path.values(), config.alpha)
}

/// Total value of `stake` units of test wealth plus `stake` puts. Until
/// expiry the puts are marked at their lattice value; at expiry the position
/// settles to `stake·max(X_τ, S)` and keeps betting at the same λ.
fn hedged_episode(
    config: &ExperimentConfig,
    plan: &HedgePlan,
    index: usize,
) -> Result<EpisodeRecord> {
    let mut rng = replication_rng(config.seed, index as u64);
    let HedgeQuote {
        strike,
        expiry,
        stake,
        ..
    } = plan.quote;
    let m = config.hypothesis.null_mean;
    let mut totals = Vec::with_capacity(config.horizon + 1);
    totals.push(stake * (1.0 + plan.put_values[0][0]));
    let mut x = 1.0;
    let mut ups = 0;
    let mut settled = 0.0;
    for t in 1..=config.horizon {
        let y = config.truth.sample(t, &mut rng);
        config.hypothesis.family.check_outcome(y)?;
        let factor = 1.0 + plan.lambda * (y - m);
        if t <= expiry {
            x *= factor;
            if factor > 1.0 {
                ups += 1;
            }
            if t < expiry {
                totals.push(stake * (x + plan.put_values[t][ups]));
            } else {
                settled = stake * x.max(strike);
                totals.push(settled);
            }
        } else {
            settled = (settled * factor).max(0.0);
            totals.push(settled);
        }
    }
    record(index, &totals, config.alpha)
}
