use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{GeneSequence, SampleGroup, TransformedMatrix, DEFAULT_LAMBDA_GRID};
use crate::martingale::{hedged_cs_values, ville_decide, Family};
use crate::portfolio::fmt17;
use crate::pricing::{solve_floor_strikes, EmpiricalPutPricer};
use crate::rng::{replication_rng, NormalCdfSampler, OutcomeSampler};

use super::config::DEFAULT_SEED;
use super::experiment::HedgeQuote;
use super::metrics::{EpisodeRecord, RiskReport};

/// Protective put on each gene's hedged process, priced by simulation under
/// the Uniform(0, 1) null.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreeningHedge {
    /// Expiry; `None` means the end of the sequence.
    pub expiry: Option<usize>,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for ScreeningHedge {
    fn default() -> Self {
        Self {
            expiry: None,
            mc_samples: 20_000,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningConfig {
    pub alpha: f64,
    /// Ruin level, and the floor the hedge protects.
    pub floor: f64,
    pub quantile: f64,
    pub hedge: Option<ScreeningHedge>,
    /// Bet sizes a hedge may fall back to when the estimated λ admits no
    /// strike for the floor.
    pub lambda_grid: Vec<f64>,
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            floor: 0.5,
            quantile: 0.01,
            hedge: None,
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
        }
    }
}

impl ScreeningConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha = {} must lie in (0, 1)", self.alpha));
        }
        if !(self.floor > 0.0 && self.floor < 1.0) {
            return bad(format!("floor = {} must lie in (0, 1)", self.floor));
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return bad(format!("quantile = {} must lie in (0, 1)", self.quantile));
        }
        if self.lambda_grid.is_empty()
            || self.lambda_grid.iter().any(|&g| !(0.0..=2.0).contains(&g))
        {
            return bad("lambda_grid must be non-empty and inside [0, 2]".into());
        }
        if let Some(h) = &self.hedge {
            if h.mc_samples < 2 {
                return bad("mc_samples must be at least 2".into());
            }
            if h.expiry == Some(0) {
                return bad("hedge expiry must be positive".into());
            }
        }
        Ok(())
    }

    /// Reads the `key = value` screening file; every key is optional.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScreeningFile = toml::from_str(text)?;
        let defaults = Self::default();
        let hedge = file.hedge.unwrap_or(false).then(|| {
            let d = ScreeningHedge::default();
            ScreeningHedge {
                expiry: file.expiry,
                mc_samples: file.mc_samples.unwrap_or(d.mc_samples),
                seed: file.seed.unwrap_or(d.seed),
            }
        });
        let config = Self {
            alpha: file.alpha.unwrap_or(defaults.alpha),
            floor: file.floor.unwrap_or(defaults.floor),
            quantile: file.quantile.unwrap_or(defaults.quantile),
            hedge,
            lambda_grid: file.lambda_grid.unwrap_or(defaults.lambda_grid),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScreeningFile {
    alpha: Option<f64>,
    floor: Option<f64>,
    quantile: Option<f64>,
    hedge: Option<bool>,
    expiry: Option<usize>,
    mc_samples: Option<usize>,
    seed: Option<u64>,
    lambda_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneDecision {
    pub id: String,
    /// λ from the plug-in estimate.
    pub lambda: f64,
    /// λ actually bet; smaller than `lambda` when the hedge forced a step down.
    pub lambda_used: f64,
    pub final_wealth: f64,
    pub max_wealth: f64,
    pub rejected: bool,
    pub crossing_time: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaHedge {
    pub lambda: f64,
    pub quote: HedgeQuote,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScreeningOutput {
    pub config: ScreeningConfig,
    pub genes: Vec<GeneDecision>,
    pub hedges: Vec<LambdaHedge>,
    pub report: RiskReport,
}

/// Simulated terminal values of the hedged process at `expiry` under the
/// Uniform(0, 1) null. Replication `i` uses the same stream for every λ.
pub fn null_terminal_hedged(lambda: f64, expiry: usize, samples: usize, seed: u64) -> Vec<f64> {
    (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = replication_rng(seed, i);
            let ys: Vec<f64> = (1..=expiry).map(|_| rng.random::<f64>()).collect();
            hedged_cs_values(&ys, lambda, 1.0)[expiry]
        })
        .collect()
}

fn quote_for(lambda: f64, expiry: usize, floor: f64, h: &ScreeningHedge) -> Result<HedgeQuote> {
    let pricer =
        EmpiricalPutPricer::new(null_terminal_hedged(lambda, expiry, h.mc_samples, h.seed));
    let strike = solve_floor_strikes(|s| pricer.put(s), floor)?[0];
    let premium = pricer.put(strike);
    Ok(HedgeQuote {
        strike,
        premium,
        expiry,
        stake: 1.0 - premium,
    })
}

/// Largest grid λ not above `wanted` whose hedge reaches the floor.
fn feasible_hedge(
    wanted: f64,
    expiry: usize,
    config: &ScreeningConfig,
    h: &ScreeningHedge,
    cache: &mut BTreeMap<u64, Option<HedgeQuote>>,
) -> Result<LambdaHedge> {
    let mut candidates: Vec<f64> = config
        .lambda_grid
        .iter()
        .copied()
        .filter(|&g| g <= wanted + 1e-12)
        .collect();
    candidates.sort_by(|a, b| b.total_cmp(a));
    for lambda in candidates {
        let entry = match cache.get(&lambda.to_bits()) {
            Some(q) => *q,
            None => {
                let q = match quote_for(lambda, expiry, config.floor, h) {
                    Ok(q) => Some(q),
                    Err(Error::NoRoot { .. }) => None,
                    Err(e) => return Err(e),
                };
                cache.insert(lambda.to_bits(), q);
                q
            }
        };
        if let Some(quote) = entry {
            if lambda < wanted {
                log::info!(
                    "λ = {wanted} cannot be hedged at floor {}; using {lambda}",
                    config.floor
                );
            }
            return Ok(LambdaHedge { lambda, quote });
        }
    }
    Err(Error::NoRoot {
        lo: 0.0,
        hi: wanted,
    })
}

/// Values used for the Ville rule on a hedged gene. Before expiry the put is
/// marked at its intrinsic value, a lower bound on its price, so the
/// recorded path never overstates the evidence.
fn hedged_gene_path(ys: &[f64], lambda: f64, quote: &HedgeQuote) -> Vec<f64> {
    let base = hedged_cs_values(&ys[..quote.expiry], lambda, 1.0);
    let mut path: Vec<f64> = base
        .iter()
        .map(|&k| quote.stake * k.max(quote.strike))
        .collect();
    let settled = path[quote.expiry];
    let rest = hedged_cs_values(&ys[quote.expiry..], lambda, settled);
    path.extend_from_slice(&rest[1..]);
    path
}

/// One hedged two-sided betting episode per gene.
pub fn run_screening(genes: &[GeneSequence], config: &ScreeningConfig) -> Result<ScreeningOutput> {
    if genes.is_empty() {
        return Err(Error::Malformed("no genes to screen".into()));
    }
    config.validate()?;
    for g in genes {
        if !(0.0..=2.0).contains(&g.lambda) {
            return Err(Error::InadmissibleBet {
                lambda: g.lambda,
                family: Family::BoundedMean,
            });
        }
        for &y in &g.sequence {
            Family::BoundedMean.check_outcome(y)?;
        }
    }
    let mut hedges: BTreeMap<u64, LambdaHedge> = BTreeMap::new();
    if let Some(h) = &config.hedge {
        let len = genes[0].sequence.len();
        if genes.iter().any(|g| g.sequence.len() != len) {
            return Err(Error::Malformed(
                "hedged screening needs equal-length sequences".into(),
            ));
        }
        let expiry = h.expiry.unwrap_or(len);
        if expiry == 0 || expiry > len {
            return Err(Error::Config(format!(
                "hedge expiry {expiry} must lie in 1..={len}"
            )));
        }
        let mut cache = BTreeMap::new();
        let mut wanted: Vec<f64> = genes.iter().map(|g| g.lambda).collect();
        wanted.sort_by(f64::total_cmp);
        wanted.dedup();
        for w in wanted {
            hedges.insert(
                w.to_bits(),
                feasible_hedge(w, expiry, config, h, &mut cache)?,
            );
        }
    }
    let decisions = genes
        .par_iter()
        .map(|g| {
            let (lambda_used, path) = match hedges.get(&g.lambda.to_bits()) {
                Some(h) => (h.lambda, hedged_gene_path(&g.sequence, h.lambda, &h.quote)),
                None => (g.lambda, hedged_cs_values(&g.sequence, g.lambda, 1.0)),
            };
            let d = ville_decide(&path, config.alpha)?;
            Ok(GeneDecision {
                id: g.id.clone(),
                lambda: g.lambda,
                lambda_used,
                final_wealth: path[path.len() - 1],
                max_wealth: path.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                rejected: d.rejected,
                crossing_time: d.crossing_time,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let episodes: Vec<EpisodeRecord> = decisions
        .iter()
        .enumerate()
        .map(|(i, d)| EpisodeRecord {
            replication: i,
            final_wealth: d.final_wealth,
            max_wealth: d.max_wealth,
            rejected: d.rejected,
            crossing_time: d.crossing_time,
        })
        .collect();
    let report = RiskReport::from_episodes(&episodes, config.quantile, config.floor)?;
    let mut used: Vec<LambdaHedge> = hedges.into_values().collect();
    used.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    used.dedup_by(|a, b| a.lambda == b.lambda);
    Ok(ScreeningOutput {
        config: config.clone(),
        genes: decisions,
        hedges: used,
        report,
    })
}

/// Per-gene CSV with `#` comment lines carrying run metadata first.
pub fn write_decisions_csv<W: Write>(
    genes: &[GeneDecision],
    header_comments: &[String],
    mut out: W,
) -> Result<()> {
    for line in header_comments {
        writeln!(out, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "gene_id",
        "lambda",
        "lambda_used",
        "final_wealth",
        "max_wealth",
        "rejected",
        "crossing_time",
    ])?;
    for g in genes {
        w.write_record([
            g.id.clone(),
            fmt17(g.lambda),
            fmt17(g.lambda_used),
            fmt17(g.final_wealth),
            fmt17(g.max_wealth),
            g.rejected.to_string(),
            g.crossing_time.map(|t| t.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Shape of a simulated screening matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScreening {
    pub genes: usize,
    pub normal_samples: usize,
    pub tumor_samples: usize,
    /// Probability that a gene is differentially expressed.
    pub shifted_fraction: f64,
    /// Mean of every transformed value of a shifted gene.
    pub shifted_mean: f64,
}

impl Default for SyntheticScreening {
    fn default() -> Self {
        Self {
            genes: 6033,
            normal_samples: 50,
            tumor_samples: 52,
            shifted_fraction: 0.0,
            shifted_mean: 0.65,
        }
    }
}

/// Already-transformed matrix: null genes are Uniform(0, 1), shifted genes
/// are `Φ(Z + δ)` with mean `shifted_mean`. Returns the matrix and which
/// genes were shifted.
pub fn synthetic_matrix(spec: &SyntheticScreening, seed: u64) -> (TransformedMatrix, Vec<bool>) {
    let samples = spec.normal_samples + spec.tumor_samples;
    let shifted = NormalCdfSampler::with_mean(spec.shifted_mean);
    let null = NormalCdfSampler::uniform();
    let (rows, flags): (Vec<Vec<f64>>, Vec<bool>) = (0..spec.genes as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = replication_rng(seed, i);
            let is_shifted = rng.random::<f64>() < spec.shifted_fraction;
            let sampler = if is_shifted { &shifted } else { &null };
            let row = (1..=samples).map(|t| sampler.sample(t, &mut rng)).collect();
            (row, is_shifted)
        })
        .unzip();
    let mut groups = vec![SampleGroup::Normal; spec.normal_samples];
    groups.extend(std::iter::repeat_n(SampleGroup::Tumor, spec.tumor_samples));
    (
        TransformedMatrix {
            gene_ids: (0..spec.genes).map(|i| format!("gene{}", i + 1)).collect(),
            groups,
            rows,
            skipped: Vec::new(),
        },
        flags,
    )
}
