//! Portfolio construction: weighted cross-sectional regression alphas,
//! closed-form dollar-neutral Sharpe maximization and the inverse of a
//! factor-structured covariance matrix.

mod fallacy;
mod optimizer;
mod regression;
mod woodbury;

pub use fallacy::{fallacy_diagnostics, FallacyReport};
pub use optimizer::{optimize_sharpe, CovarianceSolver, DenseCovariance};
pub use regression::{
    regression_holdings, weighted_regression, Design, RegressionFit, RegressionSpec,
};
pub use woodbury::{invert_factor_covariance, FactorCovarianceInverse};

use nalgebra::DVector;
use thiserror::Error;

use crate::riskmodel::RiskModelError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PortfolioError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("regression weight {index} must be positive and finite, got {value}")]
    InvalidWeight { index: usize, value: f64 },

    #[error("loadings are rank deficient: column {column} is a linear combination of columns {depends_on:?}")]
    RankDeficient { column: usize, depends_on: Vec<usize> },

    #[error("no trade: {0}")]
    NoTrade(&'static str),

    #[error("covariance matrix is singular or not positive definite")]
    SingularCovariance,

    #[error("investment level must be positive, got {0}")]
    InvalidInvestment(f64),

    #[error("need at least {required} dates, got {actual}")]
    InsufficientHistory { required: usize, actual: usize },

    #[error(transparent)]
    RiskModel(#[from] RiskModelError),
}

/// Signed dollar positions with their gross investment level.
#[derive(Debug, Clone, PartialEq)]
pub struct Holdings {
    pub positions: DVector<f64>,
    pub investment: f64,
}

impl Holdings {
    /// Rescales `direction` so that `Σ|h_i| = investment`.
    pub(crate) fn from_direction(
        direction: DVector<f64>,
        investment: f64,
    ) -> Result<Self, PortfolioError> {
        if !(investment > 0.0 && investment.is_finite()) {
            return Err(PortfolioError::InvalidInvestment(investment));
        }
        let gross = direction.lp_norm(1);
        if !(gross > 0.0 && gross.is_finite()) {
            return Err(PortfolioError::NoTrade("all-zero signal"));
        }
        Ok(Self {
            positions: direction * (investment / gross),
            investment,
        })
    }

    pub fn gross(&self) -> f64 {
        self.positions.lp_norm(1)
    }

    pub fn net(&self) -> f64 {
        self.positions.sum()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}
