use serde::{Deserialize, Serialize};

use super::BacktestError;

/// One stock's prices and volume on one date.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub open: f64,
    pub close: f64,
    pub adj_open: f64,
    pub adj_close: f64,
    pub volume: f64,
}

/// Prices by stock and date. Date index `s = 0` is the most recent date and
/// `s` increases into the past. Missing bars are `None`; nothing is imputed.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    tickers: Vec<String>,
    dates: Vec<String>,
    bars: Vec<Option<Bar>>,
}

impl PricePanel {
    /// `bars[i * dates.len() + s]` is stock `i` on date `s`. Dates must be
    /// strictly decreasing (ISO-8601 strings compare chronologically).
    pub fn new(
        tickers: Vec<String>,
        dates: Vec<String>,
        bars: Vec<Option<Bar>>,
    ) -> Result<Self, BacktestError> {
        if bars.len() != tickers.len() * dates.len() {
            return Err(BacktestError::Data(format!(
                "{} bars for {} tickers x {} dates",
                bars.len(),
                tickers.len(),
                dates.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] <= w[1]) {
            return Err(BacktestError::Data(format!(
                "dates must be strictly decreasing in s: {} then {}",
                w[0], w[1]
            )));
        }
        let nd = dates.len();
        for (k, bar) in bars.iter().enumerate() {
            let Some(b) = bar else { continue };
            let (i, s) = (k / nd, k % nd);
            for (field, v) in [
                ("open", b.open),
                ("close", b.close),
                ("adj_open", b.adj_open),
                ("adj_close", b.adj_close),
            ] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(BacktestError::NonPositivePrice {
                        ticker: tickers[i].clone(),
                        date: dates[s].clone(),
                        field,
                        value: v,
                    });
                }
            }
            if !(b.volume >= 0.0 && b.volume.is_finite()) {
                return Err(BacktestError::Data(format!(
                    "negative volume {} for {} on {}",
                    b.volume, tickers[i], dates[s]
                )));
            }
        }
        Ok(Self {
            tickers,
            dates,
            bars,
        })
    }

    pub fn n_stocks(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    /// Dates indexed by `s` (most recent first).
    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn bar(&self, stock: usize, s: usize) -> Option<&Bar> {
        self.bars[stock * self.dates.len() + s].as_ref()
    }

    /// Panel restricted to the given stocks, in that order.
    pub fn select(&self, stocks: &[usize]) -> Self {
        let nd = self.dates.len();
        let mut bars = Vec::with_capacity(stocks.len() * nd);
        for &i in stocks {
            bars.extend_from_slice(&self.bars[i * nd..(i + 1) * nd]);
        }
        Self {
            tickers: stocks.iter().map(|&i| self.tickers[i].clone()).collect(),
            dates: self.dates.clone(),
            bars,
        }
    }
}

/// Overnight log returns `R_is`, defined for `s = 0..M-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    n_stocks: usize,
    n_dates: usize,
    values: Vec<Option<f64>>,
}

impl ReturnsPanel {
    pub fn n_stocks(&self) -> usize {
        self.n_stocks
    }

    pub fn n_dates(&self) -> usize {
        self.n_dates
    }

    /// `None` where either leg is missing.
    pub fn get(&self, stock: usize, s: usize) -> Option<f64> {
        if s >= self.n_dates {
            return None;
        }
        self.values[stock * self.n_dates + s]
    }
}

/// `R_is = ln(P^AO_is / P^AC_{i,s+1})`, both legs split- and dividend-adjusted.
pub fn overnight_returns(panel: &PricePanel) -> ReturnsPanel {
    let n_dates = panel.n_dates().saturating_sub(1);
    let mut values = Vec::with_capacity(panel.n_stocks() * n_dates);
    for i in 0..panel.n_stocks() {
        for s in 0..n_dates {
            values.push(match (panel.bar(i, s), panel.bar(i, s + 1)) {
                (Some(today), Some(prev)) => Some((today.adj_open / prev.adj_close).ln()),
                _ => None,
            });
        }
    }
    ReturnsPanel {
        n_stocks: panel.n_stocks(),
        n_dates,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn flat_bar(p: f64) -> Bar {
        Bar {
            open: p,
            close: p,
            adj_open: p,
            adj_close: p,
            volume: 1000.0,
        }
    }

    fn dates(n: usize) -> Vec<String> {
        (0..n).rev().map(|d| format!("2020-01-{:02}", d + 1)).collect()
    }

    #[test]
    fn overnight_return_formula() {
        let mut today = flat_bar(102.0);
        today.adj_close = 103.0;
        let prev = flat_bar(100.0);
        let p = PricePanel::new(vec!["A".into()], dates(2), vec![Some(today), Some(prev)]).unwrap();
        let r = overnight_returns(&p);
        assert_eq!(r.n_dates(), 1);
        assert!((r.get(0, 0).unwrap() - 0.019_802_627_296_179_7).abs() < 1e-15);

        let p = PricePanel::new(vec!["A".into()], dates(2), vec![Some(flat_bar(5.0)), Some(flat_bar(5.0))]).unwrap();
        assert_eq!(overnight_returns(&p).get(0, 0), Some(0.0));
    }

    #[test]
    fn split_adjusted_series_gives_same_return() {
        // 2:1 split between s=1 and s=0: raw prices halve, adjusted history is halved too
        let unsplit = [flat_bar(100.0), flat_bar(98.0)];
        let mut split_today = flat_bar(50.0);
        split_today.adj_open = 50.0;
        let mut split_prev = flat_bar(98.0);
        split_prev.adj_close = 49.0;
        split_prev.adj_open = 49.0;
        let a = PricePanel::new(vec!["A".into()], dates(2), unsplit.iter().copied().map(Some).collect()).unwrap();
        let b = PricePanel::new(vec!["A".into()], dates(2), vec![Some(split_today), Some(split_prev)]).unwrap();
        let (ra, rb) = (overnight_returns(&a).get(0, 0).unwrap(), overnight_returns(&b).get(0, 0).unwrap());
        assert!((ra - rb).abs() < 1e-15);
    }

    #[test]
    fn missing_legs_are_flagged() {
        let p = PricePanel::new(vec!["A".into()], dates(3), vec![Some(flat_bar(1.0)), None, Some(flat_bar(1.0))]).unwrap();
        let r = overnight_returns(&p);
        assert_eq!(r.get(0, 0), None);
        assert_eq!(r.get(0, 1), None);
    }

    #[test]
    fn validation() {
        let mut bad = flat_bar(1.0);
        bad.open = 0.0;
        let err = PricePanel::new(vec!["A".into()], dates(1), vec![Some(bad)]).unwrap_err();
        assert!(matches!(err, BacktestError::NonPositivePrice { field: "open", .. }));
        let err = PricePanel::new(vec!["A".into()], vec!["2020-01-01".into(), "2020-01-02".into()], vec![None, None]);
        assert!(err.is_err());
    }
}
