use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::portfolio::fmt17;
use crate::stats::{mean_estimate, quantile_linear};

/// Outcome of one simulated or observed test episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub replication: usize,
    pub final_wealth: f64,
    pub max_wealth: f64,
    pub rejected: bool,
    pub crossing_time: Option<usize>,
}

/// Lower-tail summary of the non-rejecting final wealths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailMetrics {
    /// Linear-interpolation `q`-quantile.
    pub k_q: f64,
    /// Mean of the non-rejecting final wealths at or below `k_q`.
    pub expected_tail_wealth: f64,
    pub tail_count: usize,
}

pub fn tail_metrics(non_rejecting_finals: &[f64], q: f64) -> Result<TailMetrics> {
    if non_rejecting_finals.is_empty() {
        return Err(Error::EmptyNonRejectingSet);
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::param("q", q, "must lie in (0, 1)"));
    }
    let mut sorted = non_rejecting_finals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k_q = quantile_linear(&sorted, q);
    let tail: Vec<f64> = sorted.iter().copied().filter(|&w| w <= k_q).collect();
    Ok(TailMetrics {
        k_q,
        expected_tail_wealth: tail.iter().sum::<f64>() / tail.len() as f64,
        tail_count: tail.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub replications: usize,
    pub avg_final_wealth: f64,
    pub final_wealth_std_error: f64,
    pub power: f64,
    pub avg_max_wealth: f64,
    pub non_rejecting: usize,
    pub avg_final_given_no_reject: Option<f64>,
    pub k_q: Option<f64>,
    pub expected_tail_wealth: Option<f64>,
    /// Share of all episodes that did not reject and ended below the ruin level.
    pub ruin_rate: f64,
    pub min_final_wealth: f64,
}

impl RiskReport {
    pub fn from_episodes(
        episodes: &[EpisodeRecord],
        quantile: f64,
        ruin_level: f64,
    ) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::Malformed("no episodes to summarise".into()));
        }
        let n = episodes.len();
        let finals: Vec<f64> = episodes.iter().map(|e| e.final_wealth).collect();
        let est = mean_estimate(&finals);
        let quiet: Vec<f64> = episodes
            .iter()
            .filter(|e| !e.rejected)
            .map(|e| e.final_wealth)
            .collect();
        let tail = if quiet.is_empty() {
            None
        } else {
            Some(tail_metrics(&quiet, quantile)?)
        };
        let ruined = quiet.iter().filter(|&&w| w < ruin_level).count();
        Ok(Self {
            replications: n,
            avg_final_wealth: est.mean,
            final_wealth_std_error: if n > 1 { est.std_error } else { 0.0 },
            power: (n - quiet.len()) as f64 / n as f64,
            avg_max_wealth: episodes.iter().map(|e| e.max_wealth).sum::<f64>() / n as f64,
            non_rejecting: quiet.len(),
            avg_final_given_no_reject: (!quiet.is_empty())
                .then(|| quiet.iter().sum::<f64>() / quiet.len() as f64),
            k_q: tail.map(|t| t.k_q),
            expected_tail_wealth: tail.map(|t| t.expected_tail_wealth),
            ruin_rate: ruined as f64 / n as f64,
            min_final_wealth: finals.iter().copied().fold(f64::INFINITY, f64::min),
        })
    }
}

/// Per-episode CSV with `#` comment lines carrying run metadata first.
pub fn write_episodes_csv<W: Write>(
    episodes: &[EpisodeRecord],
    header_comments: &[String],
    mut out: W,
) -> Result<()> {
    for line in header_comments {
        writeln!(out, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "replication",
        "final_wealth",
        "max_wealth",
        "rejected",
        "crossing_time",
    ])?;
    for e in episodes {
        w.write_record([
            e.replication.to_string(),
            fmt17(e.final_wealth),
            fmt17(e.max_wealth),
            e.rejected.to_string(),
            e.crossing_time.map(|t| t.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
