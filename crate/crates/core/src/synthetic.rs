//! Synthetic daily markets with a planted three-level industry structure.
//!
//! Overnight log returns load on a market factor and one factor per sector,
//! industry and sub-industry, plus an idiosyncratic shock. The following
//! intraday session reverts a fixed fraction of the idiosyncratic shock and
//! adds fresh factor and idiosyncratic noise. Stock volatilities differ, so
//! variance weighting matters, and the factor noise rewards industry
//! neutrality.

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::backtest::{Bar, BacktestError, PricePanel};
use crate::taxonomy::ClassificationTree;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_stocks: usize,
    /// Total dates, including the history needed before the first trade.
    pub n_dates: usize,
    /// Sub-industries, industries, sectors.
    pub groups: (usize, usize, usize),
    /// Fraction of the idiosyncratic overnight move undone intraday.
    pub reversion: f64,
    /// Loading of every factor in the overnight and intraday returns, in
    /// units of the idiosyncratic volatility.
    pub factor_loading: f64,
    pub first_date: NaiveDate,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    /// 500 stocks, two years of trading after one month of history.
    fn default() -> Self {
        Self {
            n_stocks: 500,
            n_dates: 504 + 23,
            groups: (45, 15, 5),
            reversion: 0.06,
            factor_loading: 0.5,
            first_date: NaiveDate::from_ymd_opt(2015, 1, 2).expect("valid date"),
            seed: 7,
        }
    }
}

/// A generated panel with its classification and the string labels used when
/// writing it out.
#[derive(Debug, Clone)]
pub struct SyntheticMarket {
    pub panel: PricePanel,
    pub tree: ClassificationTree,
    /// Per stock: sector, industry, sub-industry labels.
    pub labels: Vec<[String; 3]>,
}

/// `n` consecutive weekdays starting at `first` (or the next weekday).
pub fn business_days(first: NaiveDate, n: usize) -> Vec<NaiveDate> {
    first
        .iter_days()
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .take(n)
        .collect()
}

pub fn generate(config: &SyntheticConfig) -> Result<SyntheticMarket, BacktestError> {
    let (k, f, l) = config.groups;
    let n = config.n_stocks;
    if !(l >= 1 && f >= l && k >= f && n >= k) {
        return Err(BacktestError::Config(format!(
            "need stocks >= sub-industries >= industries >= sectors >= 1, got {n}, {k}, {f}, {l}"
        )));
    }
    if config.n_dates < 2 {
        return Err(BacktestError::Config("need at least two dates".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // stock i sits in sub-industry i mod K; groups nest by integer scaling
    let sub_of: Vec<usize> = (0..n).map(|i| i % k).collect();
    let industry_of: Vec<usize> = (0..k).map(|g| g * f / k).collect();
    let sector_of: Vec<usize> = (0..f).map(|g| g * l / f).collect();
    let tree = ClassificationTree::three_level(sub_of.clone(), industry_of.clone(), sector_of.clone(), (k, f, l))
        .map_err(|e| BacktestError::Config(e.to_string()))?;
    let labels = (0..n)
        .map(|i| {
            let s = sub_of[i];
            let ind = industry_of[s];
            [
                format!("SEC{:02}", sector_of[ind]),
                format!("IND{ind:03}"),
                format!("SUB{s:03}"),
            ]
        })
        .collect();

    let vol: Vec<f64> = (0..n).map(|_| rng.random_range(0.005f64.ln()..0.03f64.ln()).exp()).collect();
    let base_volume: Vec<f64> = (0..n)
        .map(|_| (13.0 + normal(&mut rng)).exp())
        .collect();
    let mut close: Vec<f64> = (0..n).map(|_| rng.random_range(10.0..200.0)).collect();

    let m = config.n_dates;
    let dates: Vec<String> = business_days(config.first_date, m)
        .into_iter()
        .rev()
        .map(|d| d.format("%Y-%m-%d").to_string())
        .collect();
    let mut bars = vec![None; n * m];
    let beta = config.factor_loading;
    for t in 0..m {
        let overnight = FactorDraw::new(&mut rng, (k, f, l));
        let intraday = FactorDraw::new(&mut rng, (k, f, l));
        for i in 0..n {
            let (s, ind) = (sub_of[i], industry_of[sub_of[i]]);
            let sec = sector_of[ind];
            let eta = normal(&mut rng);
            let eps = normal(&mut rng);
            let r_on = if t == 0 { 0.0 } else { vol[i] * (beta * overnight.total(s, ind, sec) + eta) };
            let r_id = vol[i] * (-config.reversion * eta + beta * intraday.total(s, ind, sec) + eps);
            let open = close[i] * r_on.exp();
            let c = open * r_id.exp();
            close[i] = c;
            let volume = (base_volume[i] * (0.25 * normal(&mut rng)).exp()).round();
            bars[i * m + (m - 1 - t)] = Some(Bar {
                open,
                close: c,
                adj_open: open,
                adj_close: c,
                volume,
            });
        }
    }
    let tickers = (0..n).map(|i| format!("S{i:04}")).collect();
    Ok(SyntheticMarket {
        panel: PricePanel::new(tickers, dates, bars)?,
        tree,
        labels,
    })
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

struct FactorDraw {
    market: f64,
    sub: Vec<f64>,
    industry: Vec<f64>,
    sector: Vec<f64>,
}

impl FactorDraw {
    fn new(rng: &mut ChaCha8Rng, (k, f, l): (usize, usize, usize)) -> Self {
        let mut draw = |len| (0..len).map(|_| normal(rng)).collect::<Vec<f64>>();
        let (sub, industry, sector) = (draw(k), draw(f), draw(l));
        Self {
            market: normal(rng),
            sub,
            industry,
            sector,
        }
    }

    fn total(&self, s: usize, ind: usize, sec: usize) -> f64 {
        self.market + self.sector[sec] + self.industry[ind] + self.sub[s]
    }
}
