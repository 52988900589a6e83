//! The investigator's holdings: a risk-free leg, a position in the risky test
//! wealth process, and European contracts on that process.
//!
//! Contracts are marked to their risk-neutral lattice value after every
//! outcome, so the total value is itself a test martingale under the null as
//! long as every trade is value-neutral and can never make the total negative.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::martingale::{ville_decide, TestDecision};
use crate::pricing::{lattice_price, lattice_values, Contract, LatticeModel};

/// Relative tolerance when comparing a trade price against the model price.
const PRICE_TOLERANCE: f64 = 1e-9;
/// Slack for trade-limit and nonnegativity checks.
const VALUE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Position {
    pub contract: Contract,
    /// Positive when held, negative when issued.
    pub quantity: f64,
    /// Risk-neutral value of one contract at the current node.
    pub mark: f64,
    /// Absolute step index at which the contract pays out.
    pub expires_at: usize,
}

impl Position {
    pub fn value(&self) -> f64 {
        self.quantity * self.mark
    }
}

/// One-period limits for moving wealth into or out of the risky leg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TradeLimits {
    /// Largest amount that may be moved into the risky leg, borrowing if needed.
    pub max_loan: f64,
    /// Largest value of the risky asset that may be sold (short if needed).
    pub max_short: f64,
}

#[derive(Debug, Clone)]
pub enum Trade {
    /// Move this much value from the risk-free leg to the risky leg.
    MoveToRisky(f64),
    /// Sell this much value of the risky asset into the risk-free leg.
    ShortRisky(f64),
    Buy {
        contract: Contract,
        quantity: f64,
        price: f64,
    },
    Issue {
        contract: Contract,
        quantity: f64,
        price: f64,
    },
}

#[derive(Debug, Clone)]
pub struct Portfolio {
    risk_free: f64,
    risky_value: f64,
    /// Per-share value of the risky wealth process; 1 at inception.
    underlying: f64,
    t: usize,
    positions: Vec<Position>,
    model: LatticeModel,
}

impl Portfolio {
    /// All wealth in the risk-free leg, total value 1.
    pub fn new(model: LatticeModel) -> Self {
        Self::with_holdings(1.0, 0.0, model)
    }

    pub fn with_holdings(risk_free: f64, risky_value: f64, model: LatticeModel) -> Self {
        Self {
            risk_free,
            risky_value,
            underlying: 1.0,
            t: 0,
            positions: Vec::new(),
            model,
        }
    }

    pub fn risk_free(&self) -> f64 {
        self.risk_free
    }

    pub fn risky_value(&self) -> f64 {
        self.risky_value
    }

    pub fn derivative_value(&self) -> f64 {
        self.positions.iter().map(Position::value).sum()
    }

    pub fn total(&self) -> f64 {
        self.risk_free + self.risky_value + self.derivative_value()
    }

    pub fn underlying(&self) -> f64 {
        self.underlying
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn model(&self) -> &LatticeModel {
        &self.model
    }

    pub fn row(&self) -> PortfolioRow {
        PortfolioRow {
            t: self.t,
            k_free: self.risk_free,
            k_risky: self.risky_value,
            k_deriv: self.derivative_value(),
            total: self.total(),
        }
    }

    pub fn trade_limits(&self) -> TradeLimits {
        let (u, d) = (self.model.up(), self.model.down());
        TradeLimits {
            max_loan: (self.risk_free + d * self.risky_value) / (1.0 - d),
            max_short: (self.risk_free + u * self.risky_value) / (u - 1.0),
        }
    }

    /// Risk-neutral value of `contract` (expiring `contract.expiry()` steps
    /// from now) at the current node.
    pub fn model_price(&self, contract: &Contract) -> Result<f64> {
        let model = self.model.with_steps(contract.expiry())?;
        Ok(lattice_price(&model, contract, self.underlying)?.value)
    }

    pub fn rebalance(&self, trade: &Trade) -> Result<Portfolio> {
        let mut next = self.clone();
        let limits = self.trade_limits();
        match trade {
            Trade::MoveToRisky(amount) => {
                check_amount("amount", *amount)?;
                check_limit("loan", *amount, limits.max_loan)?;
                next.risk_free -= amount;
                next.risky_value += amount;
            }
            Trade::ShortRisky(amount) => {
                check_amount("amount", *amount)?;
                check_limit("short", *amount, limits.max_short)?;
                next.risk_free += amount;
                next.risky_value -= amount;
            }
            Trade::Buy {
                contract,
                quantity,
                price,
            } => {
                check_amount("quantity", *quantity)?;
                let mark = self.checked_price(contract, *price)?;
                next.risk_free -= quantity * price;
                next.positions.push(self.open(contract, *quantity, mark));
            }
            Trade::Issue {
                contract,
                quantity,
                price,
            } => {
                check_amount("quantity", *quantity)?;
                let mark = self.checked_price(contract, *price)?;
                next.risk_free += quantity * price;
                next.positions.push(self.open(contract, -quantity, mark));
            }
        }
        let worst = next.worst_case_value()?;
        if worst < -VALUE_SLACK {
            return Err(Error::NegativeWealthPossible { worst });
        }
        Ok(next)
    }

    fn open(&self, contract: &Contract, quantity: f64, mark: f64) -> Position {
        Position {
            contract: contract.clone(),
            quantity,
            mark,
            expires_at: self.t + contract.expiry(),
        }
    }

    fn checked_price(&self, contract: &Contract, price: f64) -> Result<f64> {
        let model = self.model_price(contract)?;
        if (price - model).abs() > PRICE_TOLERANCE * model.abs().max(1.0) {
            return Err(Error::OffModelPrice { price, model });
        }
        Ok(model)
    }

    fn mark_at(&self, position: &Position, t: usize, underlying: f64) -> Result<f64> {
        if t >= position.expires_at {
            return Ok(position.mark);
        }
        let remaining = position.expires_at - t;
        let model = self.model.with_steps(remaining)?;
        Ok(lattice_price(
            &model,
            &position.contract.with_expiry(remaining),
            underlying,
        )?
        .value)
    }

    /// Applies one outcome (1 = up, 0 = down) to the risky leg and re-marks
    /// every open contract at the new node.
    pub fn step(&self, outcome: f64) -> Result<Portfolio> {
        let factor = if outcome == 1.0 {
            self.model.up()
        } else if outcome == 0.0 {
            self.model.down()
        } else {
            return Err(Error::InvalidOutcome {
                value: outcome,
                family: crate::martingale::Family::Bernoulli,
            });
        };
        let mut next = self.clone();
        next.t += 1;
        next.risky_value *= factor;
        next.underlying *= factor;
        for i in 0..next.positions.len() {
            let p = &next.positions[i];
            if next.t == p.expires_at {
                next.positions[i].mark = p.contract.payoff(next.underlying);
            } else if next.t < p.expires_at {
                next.positions[i].mark = next.mark_at(p, next.t, next.underlying)?;
            }
        }
        Ok(next)
    }

    /// Converts expired contracts into cash at their payoff.
    pub fn settle_expired(&self) -> Portfolio {
        let mut next = self.clone();
        let t = self.t;
        let (expired, open): (Vec<_>, Vec<_>) =
            next.positions.drain(..).partition(|p| t >= p.expires_at);
        next.risk_free += expired.iter().map(Position::value).sum::<f64>();
        next.positions = open;
        next
    }

    /// Lowest total value reachable with the current holdings left untouched:
    /// one step ahead for the cash and risky legs (loans and shorts are
    /// one-period) or up to the last contract expiry when contracts are held.
    /// Contracts expiring earlier are settled to cash along each path; the
    /// worst accumulated settlement reaching a node is tracked exactly.
    pub fn worst_case_value(&self) -> Result<f64> {
        let horizon = self
            .positions
            .iter()
            .map(|p| p.expires_at.saturating_sub(self.t))
            .max()
            .unwrap_or(0)
            .max(1);
        let (u, d) = (self.model.up(), self.model.down());
        let mut worst = f64::INFINITY;
        // Worst settled cash over paths reaching each node at the current depth.
        let mut settled = vec![0.0f64];
        let open_values: Vec<Option<Vec<Vec<f64>>>> = self
            .positions
            .iter()
            .map(|p| {
                let remaining = p.expires_at.saturating_sub(self.t);
                if remaining == 0 {
                    return Ok(None);
                }
                let model = self.model.with_steps(remaining)?;
                lattice_values(&model, &p.contract.with_expiry(remaining), self.underlying)
                    .map(Some)
            })
            .collect::<Result<_>>()?;
        for s in 1..=horizon {
            let mut next = vec![f64::INFINITY; s + 1];
            for k in 0..=s {
                if k < s {
                    next[k] = next[k].min(settled[k]);
                }
                if k > 0 {
                    next[k] = next[k].min(settled[k - 1]);
                }
            }
            for k in 0..=s {
                let growth = u.powi(k as i32) * d.powi((s - k) as i32);
                let mut value = self.risk_free + self.risky_value * growth;
                for (p, levels) in self.positions.iter().zip(&open_values) {
                    let remaining = p.expires_at.saturating_sub(self.t);
                    match levels {
                        None => value += p.value(),
                        Some(levels) if s < remaining => value += p.quantity * levels[s][k],
                        Some(levels) if s == remaining => {
                            next[k] += p.quantity * levels[s][k];
                        }
                        Some(_) => {}
                    }
                }
                worst = worst.min(value + next[k]);
            }
            settled = next;
        }
        Ok(worst)
    }
}

fn check_amount(name: &'static str, amount: f64) -> Result<()> {
    if amount >= 0.0 && amount.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, amount, "must be nonnegative"))
    }
}

fn check_limit(bound: &'static str, requested: f64, limit: f64) -> Result<()> {
    if requested <= limit + VALUE_SLACK * limit.abs().max(1.0) {
        Ok(())
    } else {
        Err(Error::LimitViolation {
            bound,
            requested,
            limit,
        })
    }
}

/// The anytime-valid test applied to a history of total portfolio values.
pub fn portfolio_ville_decide(totals: &[f64], alpha: f64) -> Result<TestDecision> {
    ville_decide(totals, alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PortfolioRow {
    pub t: usize,
    pub k_free: f64,
    pub k_risky: f64,
    pub k_deriv: f64,
    pub total: f64,
}

pub fn write_trajectory_csv<W: Write>(rows: &[PortfolioRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "K_free", "K_risky", "K_deriv", "total"])?;
    for r in rows {
        w.write_record([
            r.t.to_string(),
            fmt17(r.k_free),
            fmt17(r.k_risky),
            fmt17(r.k_deriv),
            fmt17(r.total),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Holdings `(shares of the underlying, risk-free amount)` that replicate a
/// contract over the next step from each lattice node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hedge {
    pub shares: f64,
    pub bond: f64,
}

/// Delta-hedge ratios at every non-terminal node, built by backward induction
/// on the same lattice used for pricing. `result[t][k]` is the hedge held from
/// node `(t, k)` to `t + 1`.
pub fn replicating_hedges(
    model: &LatticeModel,
    contract: &Contract,
    spot: f64,
) -> Result<Vec<Vec<Hedge>>> {
    let values = lattice_values(model, contract, spot)?;
    let (u, d) = (model.up(), model.down());
    Ok((0..contract.expiry())
        .map(|t| {
            (0..=t)
                .map(|k| {
                    let x = model.node_value(spot, t, k);
                    let (vu, vd) = (values[t + 1][k + 1], values[t + 1][k]);
                    let shares = (vu - vd) / (x * (u - d));
                    Hedge {
                        shares,
                        bond: values[t][k] - shares * x,
                    }
                })
                .collect()
        })
        .collect())
}
