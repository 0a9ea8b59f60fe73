use nalgebra::DVector;
use rayon::prelude::*;

use super::{
    addv, metrics, overnight_returns, select_universe, trailing_variance, AlphaTiming,
    BacktestConfig, BacktestError, Metrics, PricePanel, RegressionLevel, ReturnsPanel, Strategy,
    Weighting,
};
use crate::portfolio::{
    invert_factor_covariance, optimize_sharpe, regression_holdings, weighted_regression, Design,
    FactorCovarianceInverse, Holdings, PortfolioError, RegressionSpec,
};
use crate::riskmodel::ModelSpec;
use crate::taxonomy::ClassificationTree;

/// One strategy on one date.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyRecord {
    pub date: String,
    /// `Π_s = Σ_i H_is (P^C_is / P^O_is − 1)`
    pub pnl: f64,
    /// `Q_s = Σ_i 2|H_is| / P^O_is`
    pub shares: f64,
    /// `Σ_i |H_is|`
    pub gross: f64,
    /// `Σ_i H_is`
    pub net: f64,
    /// `(panel stock index, dollars)` for every traded stock.
    pub holdings: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyReport {
    pub name: String,
    pub days: Vec<DailyRecord>,
    pub metrics: Metrics,
}

impl StrategyReport {
    pub fn pnl(&self) -> Vec<f64> {
        self.days.iter().map(|d| d.pnl).collect()
    }

    pub fn shares(&self) -> Vec<f64> {
        self.days.iter().map(|d| d.shares).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub investment: f64,
    /// Traded dates, oldest first.
    pub dates: Vec<String>,
    pub strategies: Vec<StrategyReport>,
    /// Dates on which the universe and weights were refreshed.
    pub rebalance_dates: Vec<String>,
}

/// Universe and weights shared by every date of one interval.
struct Interval {
    anchor: usize,
    dates: Vec<usize>,
    /// Panel indices, ascending.
    universe: Vec<usize>,
    /// `C_ii`, aligned with `universe`.
    variances: Vec<f64>,
    /// Per strategy: the covariance inverse over the full universe, for the
    /// optimized strategies.
    inverses: Vec<Option<FactorCovarianceInverse>>,
}

/// Runs every configured strategy over the same dates and universe.
///
/// `tree` must classify exactly the panel's stocks, in panel order.
pub fn run_backtest(
    config: &BacktestConfig,
    panel: &PricePanel,
    tree: &ClassificationTree,
) -> Result<BacktestReport, BacktestError> {
    config.validate(tree.depth())?;
    for s in &config.strategies {
        if let Strategy::Optimized { model, .. } = s {
            model.validate(tree)?;
        }
    }
    if tree.n_stocks() != panel.n_stocks() {
        return Err(BacktestError::Data(format!(
            "classification covers {} stocks but the panel has {}",
            tree.n_stocks(),
            panel.n_stocks()
        )));
    }
    let d = config.lookback;
    let required = d + 2;
    if panel.n_dates() < required {
        return Err(BacktestError::InsufficientHistory {
            required,
            actual: panel.n_dates(),
        });
    }
    let returns = overnight_returns(panel);
    // the variance window R_{s+1..s+d} needs returns up to index s + d
    let first_anchor = returns.n_dates() - 1 - d;

    let mut intervals = Vec::new();
    let mut anchor = first_anchor as isize;
    while anchor >= 0 {
        let a = anchor as usize;
        let last = a.saturating_sub(config.interval - 1);
        intervals.push(build_interval(config, panel, &returns, tree, a, last)?);
        anchor -= config.interval as isize;
    }

    if let Some(short) = intervals.iter().map(|i| i.universe.len()).filter(|&n| n < config.universe_size).min() {
        log::warn!(
            "universe of {} requested; some intervals have only {short} eligible stocks",
            config.universe_size
        );
    }

    let n_strategies = config.strategies.len();
    let mut per_strategy: Vec<Vec<DailyRecord>> = vec![Vec::new(); n_strategies];
    let mut dates = Vec::new();
    for interval in &intervals {
        let rows: Vec<Vec<DailyRecord>> = interval
            .dates
            .par_iter()
            .map(|&s| trade_date(config, panel, &returns, tree, interval, s))
            .collect::<Result<_, _>>()?;
        for (s, row) in interval.dates.iter().zip(rows) {
            dates.push(panel.dates()[*s].clone());
            for (k, rec) in row.into_iter().enumerate() {
                per_strategy[k].push(rec);
            }
        }
    }

    let strategies = config
        .strategies
        .iter()
        .zip(per_strategy)
        .map(|(s, days)| {
            let pnl: Vec<f64> = days.iter().map(|r| r.pnl).collect();
            let shares: Vec<f64> = days.iter().map(|r| r.shares).collect();
            Ok(StrategyReport {
                name: s.name(),
                metrics: metrics(&pnl, &shares, config.investment)?,
                days,
            })
        })
        .collect::<Result<_, BacktestError>>()?;

    Ok(BacktestReport {
        investment: config.investment,
        dates,
        strategies,
        rebalance_dates: intervals.iter().map(|i| panel.dates()[i.anchor].clone()).collect(),
    })
}

fn build_interval(
    config: &BacktestConfig,
    panel: &PricePanel,
    returns: &ReturnsPanel,
    tree: &ClassificationTree,
    anchor: usize,
    last: usize,
) -> Result<Interval, BacktestError> {
    let d = config.lookback;
    let variances = trailing_variance(returns, anchor, d);
    // stocks without a usable variance cannot be weighted this interval
    let eligible_addv: Vec<Option<f64>> = addv(panel, anchor, d)
        .into_iter()
        .zip(&variances)
        .map(|(a, v)| a.filter(|_| v.is_ok()))
        .collect();
    let mut universe = select_universe(&eligible_addv, config.universe_size);
    universe.sort_unstable();
    let c: Vec<f64> = universe
        .iter()
        .map(|&i| *variances[i].as_ref().expect("eligible stocks have a variance"))
        .collect();

    let inverses = config
        .strategies
        .iter()
        .map(|s| match s {
            Strategy::Optimized { model, .. } if universe.len() >= 2 => {
                covariance_inverse(tree, &universe, &c, model).map(Some)
            }
            _ => Ok(None),
        })
        .collect::<Result<_, BacktestError>>()?;

    Ok(Interval {
        anchor,
        dates: (last..=anchor).rev().collect(),
        universe,
        variances: c,
        inverses,
    })
}

/// `Θ = diag(√C) Γ diag(√C)` for the model's `Γ` on the given stocks,
/// inverted through its factor structure.
fn covariance_inverse(
    tree: &ClassificationTree,
    stocks: &[usize],
    variances: &[f64],
    model: &ModelSpec,
) -> Result<FactorCovarianceInverse, BacktestError> {
    let vol = DVector::from_iterator(variances.len(), variances.iter().map(|c| c.sqrt()));
    let scaled = model.build(tree, stocks)?.scaled(&vol)?;
    Ok(invert_factor_covariance(&scaled)?)
}

fn trade_date(
    config: &BacktestConfig,
    panel: &PricePanel,
    returns: &ReturnsPanel,
    tree: &ClassificationTree,
    interval: &Interval,
    s: usize,
) -> Result<Vec<DailyRecord>, BacktestError> {
    let alpha_date = match config.alpha_timing {
        AlphaTiming::SameDayOpen => s,
        AlphaTiming::PreviousOvernight => s + 1,
    };
    let mut active = Vec::with_capacity(interval.universe.len());
    let mut r = Vec::with_capacity(interval.universe.len());
    let mut c = Vec::with_capacity(interval.universe.len());
    for (k, &i) in interval.universe.iter().enumerate() {
        match (panel.bar(i, s), returns.get(i, alpha_date)) {
            (Some(_), Some(ret)) => {
                active.push(i);
                r.push(ret);
                c.push(interval.variances[k]);
            }
            _ => log::debug!(
                "{}: dropping {} (missing price or return)",
                panel.dates()[s],
                panel.tickers()[i]
            ),
        }
    }
    let full = active.len() == interval.universe.len();
    let r = DVector::from_vec(r);
    let c = DVector::from_vec(c);
    let sub = (active.len() >= 2).then(|| tree.restrict(&active));

    config
        .strategies
        .iter()
        .enumerate()
        .map(|(k, strategy)| {
            let holdings = match &sub {
                None => None,
                Some(sub) => {
                    let cached = if full { interval.inverses[k].as_ref() } else { None };
                    match strategy_holdings(strategy, sub, &active, &r, &c, config.investment, cached, tree) {
                        Ok(h) => Some(h),
                        Err(BacktestError::Portfolio(PortfolioError::NoTrade(why))) => {
                            log::debug!("{} {}: no trade ({why})", panel.dates()[s], strategy.name());
                            None
                        }
                        Err(e) => return Err(e),
                    }
                }
            };
            Ok(record(panel, s, &active, holdings.as_ref()))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn strategy_holdings(
    strategy: &Strategy,
    sub: &ClassificationTree,
    active: &[usize],
    returns: &DVector<f64>,
    variances: &DVector<f64>,
    investment: f64,
    cached: Option<&FactorCovarianceInverse>,
    tree: &ClassificationTree,
) -> Result<Holdings, BacktestError> {
    let weights_for = |w: Weighting| match w {
        Weighting::InverseVariance => variances.map(|v| 1.0 / v),
        Weighting::Unit => DVector::from_element(variances.len(), 1.0),
    };
    match strategy {
        Strategy::Regression { level, weighting } => {
            let z = weights_for(*weighting);
            let spec = match level {
                RegressionLevel::Intercept => RegressionSpec::intercept(z.clone())?,
                RegressionLevel::Level(l) => {
                    RegressionSpec::new(Design::Binary(sub.stock_loadings(*l)), z.clone())?
                }
            };
            let fit = weighted_regression(returns, &spec)?;
            Ok(regression_holdings(&fit.residuals, &z, investment)?)
        }
        Strategy::Optimized {
            model,
            alpha_weighting,
        } => {
            let z = weights_for(*alpha_weighting);
            let spec = RegressionSpec::new(Design::Binary(sub.stock_loadings(0)), z)?;
            // overnight residuals are expected to revert intraday
            let expected = -weighted_regression(returns, &spec)?.residuals;
            let built;
            let inverse = match cached {
                Some(inv) => inv,
                None => {
                    built = covariance_inverse(tree, active, variances.as_slice(), model)?;
                    &built
                }
            };
            Ok(optimize_sharpe(&expected, inverse, investment)?)
        }
    }
}

fn record(panel: &PricePanel, s: usize, active: &[usize], holdings: Option<&Holdings>) -> DailyRecord {
    let mut rec = DailyRecord {
        date: panel.dates()[s].clone(),
        pnl: 0.0,
        shares: 0.0,
        gross: 0.0,
        net: 0.0,
        holdings: Vec::new(),
    };
    let Some(h) = holdings else { return rec };
    rec.holdings.reserve(active.len());
    for (&i, &dollars) in active.iter().zip(h.positions.iter()) {
        let bar = panel.bar(i, s).expect("active stocks have a bar");
        rec.pnl += dollars * (bar.close / bar.open - 1.0);
        rec.shares += 2.0 * dollars.abs() / bar.open;
        rec.gross += dollars.abs();
        rec.net += dollars;
        rec.holdings.push((i, dollars));
    }
    rec
}
