use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::martingale::{Family, HypothesisSpec};
use crate::pricing::ContractKind;
use crate::rng::{BernoulliSampler, ChangePointBernoulli, OutcomeSampler, StreamRng};
use crate::strategy::{conservative_lambda, StrategySpec};

/// Seed used when a config or command line does not name one.
pub const DEFAULT_SEED: u64 = 20_240_229;

/// Data-generating process for the simulated outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Truth {
    Bernoulli {
        p: f64,
    },
    /// Bernoulli(`before`) for `t ≤ change_point`, then Bernoulli(`after`).
    ChangePoint {
        before: f64,
        after: f64,
        change_point: usize,
    },
}

impl OutcomeSampler for Truth {
    fn family(&self) -> Family {
        Family::Bernoulli
    }

    fn sample(&self, t: usize, rng: &mut StreamRng) -> f64 {
        match *self {
            Truth::Bernoulli { p } => BernoulliSampler { p }.sample(t, rng),
            Truth::ChangePoint {
                before,
                after,
                change_point,
            } => ChangePointBernoulli {
                before,
                after,
                change_point,
            }
            .sample(t, rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrikeMode {
    Explicit(f64),
    /// Lowest strike `S` with `(1 − put(S))·S = ruin_level`.
    SolveForFloor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HedgeSpec {
    pub kind: ContractKind,
    pub strike: StrikeMode,
    pub expiry: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub hypothesis: HypothesisSpec,
    pub truth: Truth,
    pub strategy: StrategySpec,
    pub hedge: Option<HedgeSpec>,
    pub horizon: usize,
    pub replications: usize,
    pub alpha: f64,
    pub ruin_level: f64,
    /// Tail quantile for `k_q`.
    pub quantile: f64,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.hypothesis.family != Family::Bernoulli {
            return bad("experiments simulate Bernoulli hypotheses".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be positive".into());
        }
        if self.replications == 0 {
            return bad("replications must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha = {} must lie in (0, 1)", self.alpha));
        }
        if !(self.ruin_level < 1.0 && self.ruin_level >= 0.0) {
            return bad(format!(
                "ruin_level = {} must lie in [0, 1)",
                self.ruin_level
            ));
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return bad(format!("quantile = {} must lie in (0, 1)", self.quantile));
        }
        match self.truth {
            Truth::Bernoulli { p } if !(0.0..=1.0).contains(&p) => {
                return bad(format!("truth p = {p} must lie in [0, 1]"));
            }
            Truth::ChangePoint {
                before,
                after,
                change_point,
            } => {
                if !(0.0..=1.0).contains(&before) || !(0.0..=1.0).contains(&after) {
                    return bad("change-point probabilities must lie in [0, 1]".into());
                }
                if change_point > self.horizon {
                    return bad(format!(
                        "change point {change_point} is after the horizon {}",
                        self.horizon
                    ));
                }
            }
            _ => {}
        }
        if let StrategySpec::DynamicFloor { horizon, .. } = self.strategy {
            if horizon < self.horizon {
                return bad("dynamic strategy horizon is shorter than the experiment".into());
            }
        }
        if let Some(h) = &self.hedge {
            if h.kind != ContractKind::EuropeanPut {
                return bad("only put hedges are supported".into());
            }
            if h.expiry == 0 || h.expiry > self.horizon {
                return bad(format!(
                    "hedge expiry {} must lie in 1..={}",
                    h.expiry, self.horizon
                ));
            }
            if self.strategy.constant_lambda().is_none() {
                return bad("hedges need a constant-bet strategy on a lattice".into());
            }
            if let StrikeMode::Explicit(s) = h.strike {
                if !(s > 0.0) {
                    return bad(format!("strike {s} must be positive"));
                }
            }
            if h.strike == StrikeMode::SolveForFloor && !(self.ruin_level > 0.0) {
                return bad("solving for a floor needs a positive ruin_level".into());
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text)?;
        file.resolve()
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}

/// On-disk `key = value` form of an experiment.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    null_p: Option<f64>,
    alt_p: Option<f64>,
    truth_p: f64,
    truth_p_before: Option<f64>,
    change_point: Option<usize>,
    strategy: String,
    lambda: Option<f64>,
    hedge: Option<String>,
    strike: Option<StrikeValue>,
    expiry: Option<usize>,
    horizon: usize,
    replications: usize,
    alpha: Option<f64>,
    ruin_level: Option<f64>,
    quantile: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum StrikeValue {
    Number(f64),
    Mode(String),
}

impl ConfigFile {
    fn resolve(self) -> Result<ExperimentConfig> {
        let null_p = self.null_p.unwrap_or(0.5);
        let alt_p = self.alt_p.unwrap_or(0.75);
        let hypothesis = HypothesisSpec::bernoulli(null_p, Some(alt_p))
            .map_err(|e| Error::Config(e.to_string()))?;
        let horizon = self.horizon;
        let ruin_level = self.ruin_level.unwrap_or(0.25);
        let truth = match (self.change_point, self.truth_p_before) {
            (Some(change_point), before) => Truth::ChangePoint {
                before: before.unwrap_or(null_p),
                after: self.truth_p,
                change_point,
            },
            (None, None) => Truth::Bernoulli { p: self.truth_p },
            (None, Some(_)) => {
                return Err(Error::Config("truth_p_before needs change_point".into()))
            }
        };
        let strategy = match self.strategy.as_str() {
            "kelly" => StrategySpec::Kelly { null_p, alt_p },
            "fixed" => StrategySpec::FixedLambda {
                lambda: self
                    .lambda
                    .ok_or_else(|| Error::Config("fixed strategy needs lambda".into()))?,
            },
            "conservative" => StrategySpec::FixedLambda {
                lambda: conservative_lambda(ruin_level, horizon, -null_p)
                    .map_err(|e| Error::Config(e.to_string()))?,
            },
            "dynamic" => StrategySpec::DynamicFloor {
                floor: ruin_level,
                horizon,
                worst_step: -null_p,
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown strategy {other:?}; expected kelly, fixed, conservative or dynamic"
                )))
            }
        };
        let hedge = match self.hedge.as_deref() {
            None | Some("none") => None,
            Some("put") => {
                let strike = match self.strike {
                    None => StrikeMode::SolveForFloor,
                    Some(StrikeValue::Number(s)) => StrikeMode::Explicit(s),
                    Some(StrikeValue::Mode(m)) if m == "solve" => StrikeMode::SolveForFloor,
                    Some(StrikeValue::Mode(m)) => {
                        return Err(Error::Config(format!(
                            "strike must be a number or \"solve\", got {m:?}"
                        )))
                    }
                };
                Some(HedgeSpec {
                    kind: ContractKind::EuropeanPut,
                    strike,
                    expiry: self.expiry.unwrap_or(horizon),
                })
            }
            Some(other) => return Err(Error::Config(format!("unknown hedge {other:?}"))),
        };
        let config = ExperimentConfig {
            hypothesis,
            truth,
            strategy,
            hedge,
            horizon,
            replications: self.replications,
            alpha: self.alpha.unwrap_or(0.05),
            ruin_level,
            quantile: self.quantile.unwrap_or(0.01),
            seed: self.seed.unwrap_or(DEFAULT_SEED),
        };
        config.validate()?;
        Ok(config)
    }
}
