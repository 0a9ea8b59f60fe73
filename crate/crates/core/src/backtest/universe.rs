use super::{PricePanel, ReturnsPanel};

/// `A_is = (1/d) Σ_{r=1..d} V_{i,s+r} P^C_{i,s+r}`: strictly the `d` dates
/// before `s`. `None` for stocks without a complete window.
pub fn addv(panel: &PricePanel, s: usize, d: usize) -> Vec<Option<f64>> {
    (0..panel.n_stocks())
        .map(|i| {
            if s + d >= panel.n_dates() {
                return None;
            }
            let mut total = 0.0;
            for r in 1..=d {
                let bar = panel.bar(i, s + r)?;
                total += bar.volume * bar.close;
            }
            Some(total / d as f64)
        })
        .collect()
}

/// Top `top_n` stocks by ADDV, highest first. Ties keep input order; stocks
/// without an ADDV are never selected.
pub fn select_universe(addv: &[Option<f64>], top_n: usize) -> Vec<usize> {
    let mut ranked: Vec<(usize, f64)> = addv
        .iter()
        .enumerate()
        .filter_map(|(i, a)| a.map(|a| (i, a)))
        .collect();
    // stable sort keeps input order among equal values
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    if ranked.len() < top_n {
        log::debug!(
            "only {} stocks eligible for a universe of {top_n}; taking all",
            ranked.len()
        );
    }
    ranked.into_iter().take(top_n).map(|(i, _)| i).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceIssue {
    InsufficientHistory,
    /// Constant returns; unusable as an inverse-variance weight.
    Zero,
}

/// Unbiased sample variance of `R_{i,s+1}, ..., R_{i,s+d}` per stock.
pub fn trailing_variance(
    returns: &ReturnsPanel,
    s: usize,
    d: usize,
) -> Vec<Result<f64, VarianceIssue>> {
    (0..returns.n_stocks())
        .map(|i| {
            let window: Option<Vec<f64>> = (1..=d).map(|r| returns.get(i, s + r)).collect();
            let window = window.ok_or(VarianceIssue::InsufficientHistory)?;
            if d < 2 {
                return Err(VarianceIssue::InsufficientHistory);
            }
            let mean = window.iter().sum::<f64>() / d as f64;
            let var = window.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (d - 1) as f64;
            if var > 0.0 {
                Ok(var)
            } else {
                Err(VarianceIssue::Zero)
            }
        })
        .collect()
}
