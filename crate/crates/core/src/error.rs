use thiserror::Error;

use crate::martingale::Family;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bet lambda={lambda} can make wealth negative for the {family:?} family")]
    InadmissibleBet { lambda: f64, family: Family },

    #[error("outcome {value} is not valid for the {family:?} family")]
    InvalidOutcome { value: f64, family: Family },

    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("lattice admits arbitrage: need d < 1 + r < u, got u={up}, d={down}, r={rate}")]
    Arbitrage { up: f64, down: f64, rate: f64 },

    #[error("contract expiry {expiry} exceeds lattice depth {steps}")]
    ExpiryBeyondLattice { expiry: usize, steps: usize },

    #[error("negative payoff {payoff} at terminal wealth {wealth}")]
    NegativePayoff { payoff: f64, wealth: f64 },

    #[error("sampler family {sampler:?} does not match process family {process:?}")]
    FamilyMismatch { sampler: Family, process: Family },

    #[error("no root in ({lo}, {hi}]")]
    NoRoot { lo: f64, hi: f64 },

    #[error("trade of {requested} exceeds the {bound} limit of {limit}")]
    LimitViolation {
        bound: &'static str,
        requested: f64,
        limit: f64,
    },

    #[error("trade allows negative wealth: worst-case value {worst}")]
    NegativeWealthPossible { worst: f64 },

    #[error("trade price {price} differs from the risk-neutral price {model}")]
    OffModelPrice { price: f64, model: f64 },

    #[error("no non-rejecting replications to compute tail metrics")]
    EmptyNonRejectingSet,

    #[error("gene {gene} has zero variance in the reference group")]
    ZeroVariance { gene: String },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error("thread pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason,
        }
    }

    /// True for errors caused by the caller's configuration or input files
    /// rather than a numeric precondition or solver failure.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Io(_) | Error::Csv(_) | Error::Toml(_) | Error::Malformed(_)
        )
    }
}
