//! Simulation experiments, risk metrics and gene screening.

mod config;
mod experiment;
mod metrics;
mod screening;

pub use config::{ExperimentConfig, HedgeSpec, StrikeMode, Truth, DEFAULT_SEED};
pub use experiment::{
    quote_hedge, run_experiment, run_shift_experiment, ExperimentOutput, HedgeQuote,
};
pub use metrics::{tail_metrics, write_episodes_csv, EpisodeRecord, RiskReport, TailMetrics};
pub use screening::{
    null_terminal_hedged, run_screening, synthetic_matrix, write_decisions_csv, GeneDecision,
    LambdaHedge, ScreeningConfig, ScreeningHedge, ScreeningOutput, SyntheticScreening,
};

use crate::error::Result;

/// Runs `f` on a pool of `workers` threads, or on the global pool when `None`.
/// Results never depend on the worker count.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()?;
            Ok(pool.install(f))
        }
    }
}
