//! Risk-neutral pricing of assets and European derivatives on a test wealth
//! process.
//!
//! Under a simple null the risk-neutral up-probability of the binomial
//! lattice equals the null probability, so a contract's price is simply its
//! expected payoff under the null. Three routes are provided: exact backward
//! induction on a recombining lattice, Monte Carlo under the null sampler, and
//! the zero-rate Black-Scholes formula for (approximately) log-normal wealth.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::martingale::{run_process_with, HypothesisSpec};
use crate::rng::{replication_rng, BernoulliSampler, OutcomeSampler};
use crate::roots::bracket_roots;
use crate::stats::{mean_estimate, normal_cdf};
use crate::strategy::{BettingStrategy, StrategySpec};

/// Search interval and grid for hedge strikes. Any root of
/// `(1 − put(S))·S = floor` has `S < 2` because a martingale put costs at
/// least `S − 1`, so `(0, 4]` always suffices.
pub const STRIKE_SEARCH_LO: f64 = 1e-6;
pub const STRIKE_SEARCH_HI: f64 = 4.0;
pub const STRIKE_SEARCH_GRID: usize = 10_000;
pub const STRIKE_TOLERANCE: f64 = 1e-12;

pub fn risk_neutral_up_prob(up: f64, down: f64, rate: f64) -> Result<f64> {
    let growth = 1.0 + rate;
    if !(down < growth && growth < up) || !(down > 0.0) {
        return Err(Error::Arbitrage { up, down, rate });
    }
    Ok((growth - down) / (up - down))
}

/// Recombining binomial model of the risky wealth process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeModel {
    up: f64,
    down: f64,
    steps: usize,
    rate: f64,
    q: f64,
}

impl LatticeModel {
    /// Zero-rate lattice.
    pub fn new(up: f64, down: f64, steps: usize) -> Result<Self> {
        Self::with_rate(up, down, steps, 0.0)
    }

    pub fn with_rate(up: f64, down: f64, steps: usize, rate: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::param("steps", 0.0, "must be positive"));
        }
        let q = risk_neutral_up_prob(up, down, rate)?;
        Ok(Self {
            up,
            down,
            steps,
            rate,
            q,
        })
    }

    /// The Kelly fair-coin process: ×3/2 on heads, ×1/2 on tails.
    pub fn kelly_coin(steps: usize) -> Self {
        Self::new(1.5, 0.5, steps).expect("valid lattice")
    }

    /// Lattice traced by a constant bet `λ` against a Bernoulli null.
    pub fn for_constant_bet(hyp: &HypothesisSpec, lambda: f64, steps: usize) -> Result<Self> {
        if hyp.family != crate::martingale::Family::Bernoulli {
            return Err(Error::Config(
                "lattice pricing needs a Bernoulli hypothesis".into(),
            ));
        }
        hyp.check_lambda(lambda)?;
        let p = hyp.null_mean;
        let (up, down) = if lambda >= 0.0 {
            (1.0 + lambda * (1.0 - p), 1.0 - lambda * p)
        } else {
            (1.0 - lambda * p, 1.0 + lambda * (1.0 - p))
        };
        Self::new(up, down, steps)
    }

    pub fn up(&self) -> f64 {
        self.up
    }

    pub fn down(&self) -> f64 {
        self.down
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn risk_neutral_up_prob(&self) -> f64 {
        self.q
    }

    pub fn with_steps(&self, steps: usize) -> Result<Self> {
        Self::with_rate(self.up, self.down, steps, self.rate)
    }

    /// Value of the underlying after `ups` up-moves in `t` steps.
    pub fn node_value(&self, spot: f64, t: usize, ups: usize) -> f64 {
        spot * self.up.powi(ups as i32) * self.down.powi((t - ups) as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractKind {
    EuropeanCall,
    EuropeanPut,
    CustomEuropean,
}

pub type PayoffFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A European contract on the terminal value of the wealth process.
/// `expiry` counts steps from the valuation date.
#[derive(Clone)]
pub struct Contract {
    kind: ContractKind,
    strike: f64,
    expiry: usize,
    custom: Option<PayoffFn>,
}

impl fmt::Debug for Contract {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Contract")
            .field("kind", &self.kind)
            .field("strike", &self.strike)
            .field("expiry", &self.expiry)
            .finish()
    }
}

impl Contract {
    pub fn call(strike: f64, expiry: usize) -> Result<Self> {
        Self::vanilla(ContractKind::EuropeanCall, strike, expiry)
    }

    pub fn put(strike: f64, expiry: usize) -> Result<Self> {
        Self::vanilla(ContractKind::EuropeanPut, strike, expiry)
    }

    pub fn vanilla(kind: ContractKind, strike: f64, expiry: usize) -> Result<Self> {
        if kind == ContractKind::CustomEuropean {
            return Err(Error::Config(
                "custom contracts need a payoff function".into(),
            ));
        }
        if !(strike >= 0.0) || !strike.is_finite() {
            return Err(Error::param("strike", strike, "must be nonnegative"));
        }
        if expiry == 0 {
            return Err(Error::param("expiry", 0.0, "must be positive"));
        }
        Ok(Self {
            kind,
            strike,
            expiry,
            custom: None,
        })
    }

    /// Arbitrary payoff of terminal wealth; it must be nonnegative wherever
    /// it is evaluated.
    pub fn custom(
        expiry: usize,
        payoff: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if expiry == 0 {
            return Err(Error::param("expiry", 0.0, "must be positive"));
        }
        Ok(Self {
            kind: ContractKind::CustomEuropean,
            strike: 0.0,
            expiry,
            custom: Some(Arc::new(payoff)),
        })
    }

    pub fn kind(&self) -> ContractKind {
        self.kind
    }

    pub fn strike(&self) -> f64 {
        self.strike
    }

    pub fn expiry(&self) -> usize {
        self.expiry
    }

    /// Same payoff, expiring `expiry` steps from now.
    pub fn with_expiry(&self, expiry: usize) -> Self {
        Self {
            expiry,
            ..self.clone()
        }
    }

    pub fn payoff(&self, wealth: f64) -> f64 {
        match self.kind {
            ContractKind::EuropeanCall => (wealth - self.strike).max(0.0),
            ContractKind::EuropeanPut => (self.strike - wealth).max(0.0),
            ContractKind::CustomEuropean => (self.custom.as_ref().unwrap())(wealth),
        }
    }

    fn checked_payoff(&self, wealth: f64) -> Result<f64> {
        let payoff = self.payoff(wealth);
        if payoff >= 0.0 {
            Ok(payoff)
        } else {
            Err(Error::NegativePayoff { payoff, wealth })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PricingMethod {
    Lattice,
    MonteCarlo,
    BlackScholes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceEstimate {
    pub value: f64,
    pub std_error: f64,
    pub method: PricingMethod,
}

/// Backward-induction values `v[t][k]` for every node (`k` up-moves after
/// `t` steps) up to the contract's expiry.
pub fn lattice_values(
    model: &LatticeModel,
    contract: &Contract,
    spot: f64,
) -> Result<Vec<Vec<f64>>> {
    let tau = contract.expiry();
    if tau > model.steps() {
        return Err(Error::ExpiryBeyondLattice {
            expiry: tau,
            steps: model.steps(),
        });
    }
    if !(spot > 0.0) {
        return Err(Error::param("spot", spot, "must be positive"));
    }
    let q = model.risk_neutral_up_prob();
    let discount = 1.0 / (1.0 + model.rate());
    let mut levels = vec![Vec::new(); tau + 1];
    levels[tau] = (0..=tau)
        .map(|k| contract.checked_payoff(model.node_value(spot, tau, k)))
        .collect::<Result<Vec<_>>>()?;
    for t in (0..tau).rev() {
        let next = &levels[t + 1];
        levels[t] = (0..=t)
            .map(|k| discount * (q * next[k + 1] + (1.0 - q) * next[k]))
            .collect();
    }
    Ok(levels)
}

pub fn lattice_price(
    model: &LatticeModel,
    contract: &Contract,
    spot: f64,
) -> Result<PriceEstimate> {
    let levels = lattice_values(model, contract, spot)?;
    Ok(PriceEstimate {
        value: levels[0][0],
        std_error: 0.0,
        method: PricingMethod::Lattice,
    })
}

/// Terminal wealth distribution of a zero-rate lattice after `steps` moves,
/// as `(wealth, risk-neutral probability)` pairs ordered by up-moves.
pub fn terminal_distribution(model: &LatticeModel, spot: f64, steps: usize) -> Vec<(f64, f64)> {
    let q = model.risk_neutral_up_prob();
    let mut coeff = 1.0f64;
    (0..=steps)
        .map(|k| {
            if k > 0 {
                coeff *= (steps + 1 - k) as f64 / k as f64;
            }
            let prob = coeff * q.powi(k as i32) * (1.0 - q).powi((steps - k) as i32);
            (model.node_value(spot, steps, k), prob)
        })
        .collect()
}

/// A wealth process: a strategy run against a hypothesis.
#[derive(Clone, Copy)]
pub struct WealthProcess<'a> {
    pub strategy: &'a dyn BettingStrategy,
    pub hypothesis: HypothesisSpec,
}

/// Simulates `n` terminal wealths of `process` at the contract's expiry with
/// outcomes from the null sampler and averages the payoff.
pub fn mc_price(
    null_sampler: &dyn OutcomeSampler,
    process: WealthProcess<'_>,
    contract: &Contract,
    n: usize,
    seed: u64,
) -> Result<PriceEstimate> {
    let payoffs = mc_terminal_wealth(null_sampler, process, contract.expiry(), n, seed)?
        .into_iter()
        .map(|w| contract.checked_payoff(w))
        .collect::<Result<Vec<_>>>()?;
    let est = mean_estimate(&payoffs);
    Ok(PriceEstimate {
        value: est.mean,
        std_error: est.std_error,
        method: PricingMethod::MonteCarlo,
    })
}

/// Monte Carlo price on a zero-rate lattice started at 1. The lattice is the
/// wealth of a constant bet `λ = u − d` against Bernoulli(`q`) outcomes.
pub fn mc_price_lattice(
    model: &LatticeModel,
    contract: &Contract,
    n: usize,
    seed: u64,
) -> Result<PriceEstimate> {
    if model.rate() != 0.0 {
        return Err(Error::param(
            "rate",
            model.rate(),
            "Monte Carlo pricing needs a zero rate",
        ));
    }
    if contract.expiry() > model.steps() {
        return Err(Error::ExpiryBeyondLattice {
            expiry: contract.expiry(),
            steps: model.steps(),
        });
    }
    let q = model.risk_neutral_up_prob();
    let strategy = StrategySpec::FixedLambda {
        lambda: model.up() - model.down(),
    };
    let process = WealthProcess {
        strategy: &strategy,
        hypothesis: HypothesisSpec::bernoulli(q, None)?,
    };
    mc_price(&BernoulliSampler { p: q }, process, contract, n, seed)
}

/// Terminal wealths of `n` independent runs, in replication order.
pub fn mc_terminal_wealth(
    sampler: &dyn OutcomeSampler,
    process: WealthProcess<'_>,
    steps: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::param("n", n as f64, "need at least two samples"));
    }
    if sampler.family() != process.hypothesis.family {
        return Err(Error::FamilyMismatch {
            sampler: sampler.family(),
            process: process.hypothesis.family,
        });
    }
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = replication_rng(seed, i);
            let path = run_process_with(process.strategy, &process.hypothesis, steps, |t| {
                sampler.sample(t, &mut rng)
            })?;
            Ok(path.terminal())
        })
        .collect()
}

fn check_black_scholes(spot: f64, strike: f64, sigma: f64, time_to_expiry: f64) -> Result<()> {
    if !(spot > 0.0) {
        return Err(Error::param("spot", spot, "must be positive"));
    }
    if !(strike > 0.0) {
        return Err(Error::param("strike", strike, "must be positive"));
    }
    if !(sigma > 0.0) {
        return Err(Error::param("sigma", sigma, "must be positive"));
    }
    if !(time_to_expiry > 0.0) {
        return Err(Error::param(
            "time_to_expiry",
            time_to_expiry,
            "must be positive",
        ));
    }
    Ok(())
}

/// Zero-rate Black-Scholes call.
pub fn black_scholes_call(spot: f64, strike: f64, sigma: f64, time_to_expiry: f64) -> Result<f64> {
    check_black_scholes(spot, strike, sigma, time_to_expiry)?;
    let vol = sigma * time_to_expiry.sqrt();
    let d1 = ((spot / strike).ln() + 0.5 * vol * vol) / vol;
    let d2 = d1 - vol;
    Ok(spot * normal_cdf(d1) - strike * normal_cdf(d2))
}

/// Zero-rate Black-Scholes put from parity.
pub fn black_scholes_put(spot: f64, strike: f64, sigma: f64, time_to_expiry: f64) -> Result<f64> {
    let call = black_scholes_call(spot, strike, sigma, time_to_expiry)?;
    Ok((strike - spot + call).max(0.0))
}

/// Strikes `S` with `(1 − put(S))·S = floor`: buying the put for `put(S)`
/// out of unit wealth leaves `1 − put(S)` invested, protected at `S`.
pub fn solve_floor_strikes(put_price: impl Fn(f64) -> f64, floor: f64) -> Result<Vec<f64>> {
    if !(floor > 0.0 && floor < 1.0) {
        return Err(Error::param("floor", floor, "must lie in (0, 1)"));
    }
    bracket_roots(
        |s| (1.0 - put_price(s)) * s - floor,
        STRIKE_SEARCH_LO,
        STRIKE_SEARCH_HI,
        STRIKE_SEARCH_GRID,
        STRIKE_TOLERANCE,
    )
}

/// Hedge strikes for a put expiring at `horizon` on the lattice process
/// started at 1.
pub fn solve_hedge_strike(model: &LatticeModel, floor: f64, horizon: usize) -> Result<Vec<f64>> {
    if horizon == 0 || horizon > model.steps() {
        return Err(Error::ExpiryBeyondLattice {
            expiry: horizon,
            steps: model.steps(),
        });
    }
    let terminal = terminal_distribution(model, 1.0, horizon);
    solve_floor_strikes(
        |s| {
            terminal
                .iter()
                .map(|&(w, p)| p * (s - w).max(0.0))
                .sum::<f64>()
        },
        floor,
    )
}

/// Put prices against a fixed sample of terminal wealths. Using one sample
/// for every strike keeps `put(S)` continuous and monotone in `S`, which the
/// strike solver needs.
#[derive(Debug, Clone)]
pub struct EmpiricalPutPricer {
    sorted: Vec<f64>,
    prefix: Vec<f64>,
}

impl EmpiricalPutPricer {
    pub fn new(mut terminal: Vec<f64>) -> Self {
        terminal.sort_by(f64::total_cmp);
        let mut prefix = Vec::with_capacity(terminal.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for &w in &terminal {
            acc += w;
            prefix.push(acc);
        }
        Self {
            sorted: terminal,
            prefix,
        }
    }

    pub fn put(&self, strike: f64) -> f64 {
        let below = self.sorted.partition_point(|&w| w < strike);
        (below as f64 * strike - self.prefix[below]) / self.sorted.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mc_on_a_skewed_lattice() {
        let m = LatticeModel::new(2.0, 0.5, 4).unwrap();
        let put = Contract::put(1.0, 4).unwrap();
        let exact = lattice_price(&m, &put, 1.0).unwrap().value;
        let est = mc_price_lattice(&m, &put, 40_000, 5).unwrap();
        assert!(
            (est.value - exact).abs() <= 3.0 * est.std_error,
            "{est:?} vs {exact}"
        );
        assert!(mc_price_lattice(&m, &Contract::put(1.0, 5).unwrap(), 100, 5).is_err());
    }

    #[test]
    fn figure_one_prices() {
        let m = LatticeModel::kelly_coin(3);
        let call = lattice_price(&m, &Contract::call(10.0 / 8.0, 3).unwrap(), 1.0).unwrap();
        assert_eq!(call.value, 17.0 / 64.0);
        assert_eq!(call.std_error, 0.0);
        let put = lattice_price(&m, &Contract::put(0.25, 3).unwrap(), 1.0).unwrap();
        assert_eq!(put.value, 1.0 / 64.0);
        let levels = lattice_values(&m, &Contract::call(10.0 / 8.0, 3).unwrap(), 1.0).unwrap();
        assert_eq!(levels[2][2], 17.0 / 16.0);
        assert_eq!(levels[3][3], 17.0 / 8.0);
    }

    #[test]
    fn risk_neutral_probabilities() {
        assert_eq!(risk_neutral_up_prob(1.5, 0.5, 0.0).unwrap(), 0.5);
        let q = risk_neutral_up_prob(2.0, 0.5, 0.0).unwrap();
        assert!((q - 1.0 / 3.0).abs() < 1e-15);
        assert!((q * 2.0 + (1.0 - q) * 0.5 - 1.0).abs() < 1e-15);
        for eps in [1e-3, 0.1, 0.4] {
            let q = risk_neutral_up_prob(1.0 + 2.0 * eps, 1.0 - 2.0 * eps, 0.0).unwrap();
            assert!((q - 0.5).abs() < 1e-12);
        }
        assert!(risk_neutral_up_prob(1.0, 0.5, 0.0).is_err());
        assert!(risk_neutral_up_prob(1.5, 1.0, 0.0).is_err());
        assert!(risk_neutral_up_prob(1.5, 0.5, 0.6).is_err());
    }

    #[test]
    fn degenerate_strikes() {
        let m = LatticeModel::kelly_coin(10);
        for spot in [0.3, 1.0, 2.5] {
            let c = lattice_price(&m, &Contract::call(0.0, 7).unwrap(), spot).unwrap();
            assert!((c.value - spot).abs() < 1e-12);
            let p = lattice_price(&m, &Contract::put(0.0, 7).unwrap(), spot).unwrap();
            assert_eq!(p.value, 0.0);
        }
    }

    #[test]
    fn expiry_beyond_depth() {
        let m = LatticeModel::kelly_coin(3);
        assert!(matches!(
            lattice_price(&m, &Contract::put(1.0, 4).unwrap(), 1.0),
            Err(Error::ExpiryBeyondLattice { .. })
        ));
    }

    #[test]
    fn negative_custom_payoff_rejected() {
        let m = LatticeModel::kelly_coin(2);
        let c = Contract::custom(2, |w| w - 1.0).unwrap();
        assert!(matches!(
            lattice_price(&m, &c, 1.0),
            Err(Error::NegativePayoff { .. })
        ));
    }

    #[test]
    fn terminal_distribution_prices_match_backward_induction() {
        let m = LatticeModel::new(2.0, 0.5, 12).unwrap();
        let put = Contract::put(0.8, 12).unwrap();
        let by_tree = lattice_price(&m, &put, 1.0).unwrap().value;
        let by_dist: f64 = terminal_distribution(&m, 1.0, 12)
            .iter()
            .map(|&(w, p)| p * put.payoff(w))
            .sum();
        assert!((by_tree - by_dist).abs() < 1e-14);
    }

    #[test]
    fn black_scholes_values() {
        let atm = black_scholes_call(1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((atm - (2.0 * normal_cdf(0.5) - 1.0)).abs() < 1e-15);
        assert!((atm - 0.382_924_922_548_026).abs() < 1e-12);
        let deep = black_scholes_call(1.5, 1.0, 1e-9, 1.0).unwrap();
        assert!((deep - 0.5).abs() < 1e-12);
        let put = black_scholes_put(1.0, 1.2, 0.3, 2.0).unwrap();
        let call = black_scholes_call(1.0, 1.2, 0.3, 2.0).unwrap();
        assert!((call - put - (1.0 - 1.2)).abs() < 1e-14);
        assert!(black_scholes_call(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(black_scholes_call(1.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn hedge_strikes_for_the_coin_experiment() {
        let m = LatticeModel::kelly_coin(20);
        let roots = solve_hedge_strike(&m, 0.25, 20).unwrap();
        assert_eq!(roots.len(), 2);
        assert!((roots[0] - 0.30866).abs() < 1e-4, "{roots:?}");
        assert!((roots[1] - 0.97285).abs() < 1e-4, "{roots:?}");
        let small = solve_hedge_strike(&m, 1e-4, 20).unwrap();
        assert!(small[0] < 2e-4);
        assert!(solve_hedge_strike(&m, 1.0, 20).is_err());
    }

    #[test]
    fn empirical_put_matches_direct_average() {
        let samples = vec![0.1, 0.7, 0.3, 1.9, 0.5];
        let p = EmpiricalPutPricer::new(samples.clone());
        for s in [0.0, 0.2, 0.5, 1.0, 3.0] {
            let direct = samples.iter().map(|w| (s - w).max(0.0)).sum::<f64>() / 5.0;
            assert!((p.put(s) - direct).abs() < 1e-15);
        }
    }
}
