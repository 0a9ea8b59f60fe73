//! What goes wrong when factor covariance and specific risk are read straight
//! off a time series of unit-weight cross-sectional regressions.
//!
//! With `f = (ΩᵀΩ)⁻¹ΩᵀR` and `ε = (1 − Q)R`, `Q = Ω(ΩᵀΩ)⁻¹Ωᵀ`, the sample
//! covariances are `⟨ε,εᵀ⟩ = (1−Q)C(1−Q)` and `Ω⟨f,fᵀ⟩Ωᵀ = QCQ`. Only their
//! traces add up to `Tr C`; per stock the naive total variance misses `C_ii`,
//! and defining `ξ_i² = C_ii − (QCQ)_ii` instead can go negative.

use nalgebra::{DMatrix, DVector};

use super::{Design, PortfolioError, RegressionSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct FallacyReport {
    pub n_dates: usize,
    pub n_stocks: usize,
    pub n_factors: usize,
    /// `max |Q² − Q|`
    pub idempotence_error: f64,
    /// `max |Q − Qᵀ|`
    pub symmetry_error: f64,
    /// `Tr(⟨ε,εᵀ⟩ + Ω⟨f,fᵀ⟩Ωᵀ)`
    pub trace_model: f64,
    /// `Tr(C)`
    pub trace_sample: f64,
    /// Per stock: `⟨ε_i,ε_i⟩ + (Ω⟨f,fᵀ⟩Ωᵀ)_ii − C_ii`.
    pub variance_gaps: DVector<f64>,
    /// Per stock: `C_ii − (Ω⟨f,fᵀ⟩Ωᵀ)_ii`.
    pub naive_specific: DVector<f64>,
}

impl FallacyReport {
    pub fn trace_relative_error(&self) -> f64 {
        (self.trace_model - self.trace_sample).abs() / self.trace_sample.abs().max(f64::MIN_POSITIVE)
    }

    pub fn negative_specific_count(&self) -> usize {
        self.naive_specific.iter().filter(|v| **v < 0.0).count()
    }

    pub fn max_abs_gap(&self) -> f64 {
        self.variance_gaps.amax()
    }
}

/// Sample covariance (unbiased divisor) of the columns of `x` (`T × k`).
fn sample_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let t = x.nrows();
    let mean = x.row_mean();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    centered.transpose() * &centered / (t as f64 - 1.0)
}

/// `returns` is `T × N` (one row per date); `loadings` is `N × K`.
pub fn fallacy_diagnostics(
    returns: &DMatrix<f64>,
    loadings: &DMatrix<f64>,
) -> Result<FallacyReport, PortfolioError> {
    let (t, n) = returns.shape();
    if t < 2 {
        return Err(PortfolioError::InsufficientHistory { required: 2, actual: t });
    }
    if loadings.nrows() != n {
        return Err(PortfolioError::DimensionMismatch(format!(
            "returns cover {n} stocks but loadings have {} rows",
            loadings.nrows()
        )));
    }
    // rejects rank-deficient loadings with a column-level diagnosis
    RegressionSpec::new(Design::Dense(loadings.clone()), DVector::from_element(n, 1.0))?;
    if loadings.column_iter().any(|c| c.iter().all(|v| *v == 0.0)) {
        return Err(PortfolioError::RankDeficient {
            column: loadings
                .column_iter()
                .position(|c| c.iter().all(|v| *v == 0.0))
                .unwrap_or(0),
            depends_on: Vec::new(),
        });
    }
    let gram = loadings.transpose() * loadings;
    let chol = gram.cholesky().ok_or(PortfolioError::RankDeficient {
        column: loadings.ncols().saturating_sub(1),
        depends_on: Vec::new(),
    })?;
    // f_s = (ΩᵀΩ)⁻¹ΩᵀR_s for every date, stacked as rows
    let factor_returns = chol.solve(&(loadings.transpose() * returns.transpose())).transpose();
    let projector = loadings * chol.solve(&loadings.transpose());
    let residuals = returns - &factor_returns * loadings.transpose();

    let c = sample_covariance(returns);
    let eps_cov = sample_covariance(&residuals);
    let factor_part = loadings * sample_covariance(&factor_returns) * loadings.transpose();

    let idempotence_error = (&projector * &projector - &projector).amax();
    let symmetry_error = (&projector - projector.transpose()).amax();
    let variance_gaps = DVector::from_fn(n, |i, _| eps_cov[(i, i)] + factor_part[(i, i)] - c[(i, i)]);
    let naive_specific = DVector::from_fn(n, |i, _| c[(i, i)] - factor_part[(i, i)]);

    Ok(FallacyReport {
        n_dates: t,
        n_stocks: n,
        n_factors: loadings.ncols(),
        idempotence_error,
        symmetry_error,
        trace_model: eps_cov.trace() + factor_part.trace(),
        trace_sample: c.trace(),
        variance_gaps,
        naive_specific,
    })
}
