//! Sequential hypothesis testing by betting, with risk-neutral pricing of
//! assets and European derivatives written on the test wealth process.
//!
//! Under a simple null the risk-neutral measure coincides with the null
//! measure, so any contract traded at its risk-neutral price keeps the
//! investigator's total portfolio value a test martingale and Ville's
//! inequality still gives an anytime-valid level-α test. This crate provides
//! the wealth processes and betting strategies, lattice / Monte Carlo /
//! Black-Scholes pricers, a multi-leg portfolio with exact trade limits,
//! simulation experiments with ruin metrics, and a microarray ingestion
//! pipeline for gene screening.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod ingest;
pub mod martingale;
pub mod portfolio;
pub mod pricing;
pub mod rng;
pub mod roots;
pub mod stats;
pub mod strategy;

pub use error::{Error, Result};
pub use martingale::{
    cash_flow, run_hedged_cs, run_process, update_wealth, ville_decide, CashFlow, Family,
    HypothesisSpec, TestDecision, WealthPath,
};
pub use strategy::{BettingStrategy, History, StrategySpec};
