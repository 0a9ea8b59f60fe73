use serde::{Deserialize, Serialize};

use super::BacktestError;

pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;

/// Annualized return on capital, annualized Sharpe ratio and cents per share.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Fraction, not percent.
    pub roc: f64,
    /// `None` when the daily P&L has zero (or undefined) standard deviation.
    pub sharpe: Option<f64>,
    /// `None` when no shares were traded.
    pub cps: Option<f64>,
}

/// ROC = mean(Π)·252 / I; SR = mean(Π)/stdev(Π)·√252 with the unbiased
/// stdev; CPS = 100·ΣΠ / ΣQ.
pub fn metrics(pnl: &[f64], shares: &[f64], investment: f64) -> Result<Metrics, BacktestError> {
    if pnl.is_empty() {
        return Err(BacktestError::Config("metrics need a nonempty P&L series".into()));
    }
    if pnl.len() != shares.len() {
        return Err(BacktestError::Config(format!(
            "{} P&L values but {} share counts",
            pnl.len(),
            shares.len()
        )));
    }
    if !(investment > 0.0) {
        return Err(BacktestError::Config(format!("investment level {investment} must be positive")));
    }
    let n = pnl.len() as f64;
    let total: f64 = pnl.iter().sum();
    let mean = total / n;
    let roc = mean * TRADING_DAYS_PER_YEAR / investment;
    let sharpe = if pnl.len() > 1 {
        let var = pnl.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        (sd > 0.0).then(|| mean / sd * TRADING_DAYS_PER_YEAR.sqrt())
    } else {
        None
    };
    let total_shares: f64 = shares.iter().sum();
    let cps = (total_shares > 0.0).then(|| 100.0 * total / total_shares);
    Ok(Metrics { roc, sharpe, cps })
}
