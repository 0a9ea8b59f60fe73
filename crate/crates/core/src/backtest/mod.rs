//! Intraday backtest of overnight mean-reversion alphas.
//!
//! Positions are established at the open and liquidated at the close of the
//! same day, with no costs. The trading universe and the inverse-variance
//! weights are refreshed once per interval (21 trading days by default) from
//! the window immediately preceding the interval.

mod metrics;
mod panel;
mod runner;
mod universe;

pub use metrics::{metrics, Metrics, TRADING_DAYS_PER_YEAR};
pub use panel::{overnight_returns, Bar, PricePanel, ReturnsPanel};
pub use runner::{run_backtest, BacktestReport, DailyRecord, StrategyReport};
pub use universe::{addv, select_universe, trailing_variance, VarianceIssue};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::portfolio::PortfolioError;
use crate::riskmodel::{AnsatzWeights, ModelSpec, ModelTerminal, RiskModelError};
use crate::taxonomy::THREE_LEVEL_NAMES;

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("nonpositive {field} price {value} for {ticker} on {date}")]
    NonPositivePrice {
        ticker: String,
        date: String,
        field: &'static str,
        value: f64,
    },

    #[error("need at least {required} dates of history, got {actual}")]
    InsufficientHistory { required: usize, actual: usize },

    #[error(transparent)]
    Portfolio(#[from] PortfolioError),

    #[error(transparent)]
    RiskModel(#[from] RiskModelError),
}

/// Regression loadings: the intercept alone or one classification level
/// (0 = finest).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegressionLevel {
    Intercept,
    Level(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    /// `z_i = 1/C_ii`
    InverseVariance,
    Unit,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    Regression {
        level: RegressionLevel,
        weighting: Weighting,
    },
    /// Sharpe maximization under a correlation model scaled by the trailing
    /// variances. Expected returns are minus the finest-level regression
    /// residuals with the given weighting.
    Optimized {
        model: ModelSpec,
        alpha_weighting: Weighting,
    },
}

impl Strategy {
    /// The five strategies of the standard horse race for a tree of `depth`
    /// levels: intercept, every level coarsest to finest, then the optimizer.
    pub fn standard_set(depth: usize) -> Vec<Strategy> {
        let mut v = vec![Strategy::Regression {
            level: RegressionLevel::Intercept,
            weighting: Weighting::InverseVariance,
        }];
        v.extend((0..depth).rev().map(|l| Strategy::Regression {
            level: RegressionLevel::Level(l),
            weighting: Weighting::InverseVariance,
        }));
        v.push(Strategy::Optimized {
            model: ModelSpec::heuristic(AnsatzWeights::equal(depth)),
            alpha_weighting: Weighting::Unit,
        });
        v
    }

    /// The regressions of the standard set with unit weights.
    pub fn unit_weight_set(depth: usize) -> Vec<Strategy> {
        Self::standard_set(depth)
            .into_iter()
            .filter_map(|s| match s {
                Strategy::Regression { level, .. } => Some(Strategy::Regression {
                    level,
                    weighting: Weighting::Unit,
                }),
                Strategy::Optimized { .. } => None,
            })
            .collect()
    }

    pub fn name(&self) -> String {
        match self {
            Strategy::Regression { level, weighting } => {
                let base = match level {
                    RegressionLevel::Intercept => "intercept".to_string(),
                    RegressionLevel::Level(l) => level_name(*l),
                };
                match weighting {
                    Weighting::InverseVariance => base,
                    Weighting::Unit => format!("{base}-unit"),
                }
            }
            Strategy::Optimized { alpha_weighting, .. } => match alpha_weighting {
                Weighting::Unit => "optimized".into(),
                Weighting::InverseVariance => "optimized-weighted-alpha".into(),
            },
        }
    }

    fn validate(&self, depth: usize) -> Result<(), BacktestError> {
        match self {
            Strategy::Regression {
                level: RegressionLevel::Level(l),
                ..
            } if *l >= depth => Err(BacktestError::Config(format!(
                "regression level {l} does not exist in a {depth}-level tree"
            ))),
            Strategy::Optimized { model, .. } => match model.terminal {
                ModelTerminal::ExplicitFcm(_) => Ok(model.weights.validate_count(depth)?),
                _ => Ok(model.weights.validate(depth)?),
            },
            _ => Ok(()),
        }
    }
}

fn level_name(level: usize) -> String {
    THREE_LEVEL_NAMES
        .get(level)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("level{level}"))
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Parses the names produced by [`Strategy::name`]. `optimized` uses the
/// heuristic model with equal weights over three levels; override the model
/// through the config.
impl FromStr for Strategy {
    type Err = BacktestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "optimized" => {
                return Ok(Strategy::Optimized {
                    model: ModelSpec::heuristic(AnsatzWeights::equal(3)),
                    alpha_weighting: Weighting::Unit,
                })
            }
            "optimized-weighted-alpha" => {
                return Ok(Strategy::Optimized {
                    model: ModelSpec::heuristic(AnsatzWeights::equal(3)),
                    alpha_weighting: Weighting::InverseVariance,
                })
            }
            _ => {}
        }
        let (base, weighting) = match s.strip_suffix("-unit") {
            Some(b) => (b, Weighting::Unit),
            None => (s, Weighting::InverseVariance),
        };
        let level = if base == "intercept" {
            RegressionLevel::Intercept
        } else if let Some(l) = THREE_LEVEL_NAMES.iter().position(|n| *n == base) {
            RegressionLevel::Level(l)
        } else if let Some(l) = base.strip_prefix("level").and_then(|d| d.parse().ok()) {
            RegressionLevel::Level(l)
        } else {
            return Err(BacktestError::Config(format!("unknown strategy '{s}'")));
        };
        Ok(Strategy::Regression { level, weighting })
    }
}

/// Which overnight return drives the alpha on date `s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaTiming {
    /// `R_is`, using the same day's open: the open is both signal and fill.
    SameDayOpen,
    /// `R_{i,s+1}`, known before the open.
    PreviousOvernight,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig {
    /// Window `d` for ADDV and trailing variances.
    pub lookback: usize,
    pub universe_size: usize,
    /// Dates between universe and weight refreshes.
    pub interval: usize,
    /// Gross intraday investment `I` (long plus short), in dollars.
    pub investment: f64,
    pub strategies: Vec<Strategy>,
    pub alpha_timing: AlphaTiming,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            lookback: 21,
            universe_size: 2000,
            interval: 21,
            investment: 20e6,
            strategies: Strategy::standard_set(3),
            alpha_timing: AlphaTiming::SameDayOpen,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self, depth: usize) -> Result<(), BacktestError> {
        if self.lookback < 2 {
            return Err(BacktestError::Config(format!("lookback {} must be at least 2", self.lookback)));
        }
        if self.universe_size < 1 {
            return Err(BacktestError::Config("universe size must be at least 1".into()));
        }
        if self.interval < 1 {
            return Err(BacktestError::Config("interval must be at least 1".into()));
        }
        if !(self.investment > 0.0 && self.investment.is_finite()) {
            return Err(BacktestError::Config(format!("investment {} must be positive", self.investment)));
        }
        for s in &self.strategies {
            s.validate(depth)?;
        }
        let mut names: Vec<String> = self.strategies.iter().map(Strategy::name).collect();
        names.sort();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(BacktestError::Config(format!("strategy '{}' listed twice", w[0])));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::standard_set(3).into_iter().chain(Strategy::unit_weight_set(3)) {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        let names: Vec<String> = Strategy::standard_set(3).iter().map(Strategy::name).collect();
        assert_eq!(names, ["intercept", "sector", "industry", "sub-industry", "optimized"]);
        assert!("bogus".parse::<Strategy>().is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = BacktestConfig::default();
        assert!(c.validate(3).is_ok());
        c.lookback = 1;
        assert!(c.validate(3).is_err());
        let mut c = BacktestConfig::default();
        c.strategies.push(Strategy::Regression {
            level: RegressionLevel::Level(3),
            weighting: Weighting::Unit,
        });
        assert!(c.validate(3).is_err());
        let c = BacktestConfig {
            strategies: vec![Strategy::Optimized {
                model: ModelSpec::heuristic(AnsatzWeights::from_slice(&[0.2, 0.2, 0.2, 0.1]).unwrap()),
                alpha_weighting: Weighting::Unit,
            }],
            ..BacktestConfig::default()
        };
        assert!(c.validate(3).is_err());
    }
}
