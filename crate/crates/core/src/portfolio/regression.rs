use nalgebra::{DMatrix, DVector};

use super::{Holdings, PortfolioError};
use crate::taxonomy::BinaryLoadings;

/// Relative residual norm below which a column counts as linearly dependent.
const RANK_TOL: f64 = 1e-10;

/// Regression loadings `Y`.
#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    /// Each row loads on exactly one column; the regression reduces to
    /// weighted group means.
    Binary(BinaryLoadings),
    Dense(DMatrix<f64>),
}

/// Loadings plus strictly positive regression weights `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSpec {
    design: Design,
    weights: DVector<f64>,
    /// original column index of every retained column
    kept_columns: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    /// `ε = R − Y Q⁻¹ Yᵀ Z R`
    pub residuals: DVector<f64>,
    /// `f = Q⁻¹ Yᵀ Z R`, one entry per retained column.
    pub factor_returns: DVector<f64>,
}

impl RegressionSpec {
    /// Validates weights, drops all-zero columns and rejects rank-deficient
    /// loadings.
    pub fn new(design: Design, weights: DVector<f64>) -> Result<Self, PortfolioError> {
        let rows = match &design {
            Design::Binary(b) => b.rows(),
            Design::Dense(y) => y.nrows(),
        };
        if rows != weights.len() {
            return Err(PortfolioError::DimensionMismatch(format!(
                "loadings have {rows} rows but {} weights were given",
                weights.len()
            )));
        }
        if let Some((index, &value)) = weights
            .iter()
            .enumerate()
            .find(|(_, z)| !(z.is_finite() && **z > 0.0))
        {
            return Err(PortfolioError::InvalidWeight { index, value });
        }
        let (design, kept_columns) = match design {
            Design::Binary(b) => {
                let mut used = vec![false; b.cols()];
                for &c in b.assignment() {
                    used[c] = true;
                }
                let mut remap = vec![usize::MAX; b.cols()];
                let mut kept = Vec::new();
                for (c, _) in used.iter().enumerate().filter(|(_, u)| **u) {
                    remap[c] = kept.len();
                    kept.push(c);
                }
                let assignment = b.assignment().iter().map(|&c| remap[c]).collect();
                let compact = BinaryLoadings::new(assignment, kept.len())
                    .expect("remapped columns are in range");
                (Design::Binary(compact), kept)
            }
            Design::Dense(y) => {
                let kept: Vec<usize> = (0..y.ncols())
                    .filter(|&c| y.column(c).iter().any(|v| *v != 0.0))
                    .collect();
                let y = y.select_columns(kept.iter());
                check_rank(&y, &weights, &kept)?;
                (Design::Dense(y), kept)
            }
        };
        Ok(Self {
            design,
            weights,
            kept_columns,
        })
    }

    /// Regression over the intercept only.
    pub fn intercept(weights: DVector<f64>) -> Result<Self, PortfolioError> {
        let n = weights.len();
        let b = BinaryLoadings::new(vec![0; n], 1).expect("single column");
        Self::new(Design::Binary(b), weights)
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// Original indices of the columns that survived empty-column removal.
    pub fn kept_columns(&self) -> &[usize] {
        &self.kept_columns
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    /// Dense `Y` after empty-column removal.
    pub fn loadings_matrix(&self) -> DMatrix<f64> {
        match &self.design {
            Design::Binary(b) => b.to_matrix(),
            Design::Dense(y) => y.clone(),
        }
    }
}

/// Gram–Schmidt in the `Z`-weighted inner product; reports the first column
/// that lies in the span of the columns before it.
fn check_rank(y: &DMatrix<f64>, z: &DVector<f64>, original: &[usize]) -> Result<(), PortfolioError> {
    let sqrt_z = z.map(f64::sqrt);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for c in 0..y.ncols() {
        let col = y.column(c).component_mul(&sqrt_z);
        let mut r = col.clone();
        for q in &basis {
            let proj = q.dot(&r);
            r.axpy(-proj, q, 1.0);
        }
        let norm = r.norm();
        if norm <= RANK_TOL * col.norm() {
            // coefficients of the dependent column on the earlier ones
            let prev = y.columns(0, c).clone_owned();
            let mut weighted = prev.clone();
            for (i, s) in z.iter().enumerate() {
                weighted.row_mut(i).scale_mut(*s);
            }
            let gram = prev.transpose() * &weighted;
            let rhs = weighted.transpose() * y.column(c);
            let coef = gram
                .cholesky()
                .map(|ch| ch.solve(&rhs))
                .unwrap_or_else(|| DVector::zeros(c));
            let scale = coef.amax().max(f64::MIN_POSITIVE);
            let depends_on = coef
                .iter()
                .enumerate()
                .filter(|(_, v)| v.abs() > 1e-8 * scale)
                .map(|(j, _)| original[j])
                .collect();
            return Err(PortfolioError::RankDeficient {
                column: original[c],
                depends_on,
            });
        }
        basis.push(r / norm);
    }
    Ok(())
}

/// Weighted cross-sectional regression of `returns` over the loadings.
pub fn weighted_regression(
    returns: &DVector<f64>,
    spec: &RegressionSpec,
) -> Result<RegressionFit, PortfolioError> {
    if returns.len() != spec.n() {
        return Err(PortfolioError::DimensionMismatch(format!(
            "{} returns for a regression over {} stocks",
            returns.len(),
            spec.n()
        )));
    }
    let z = &spec.weights;
    match &spec.design {
        Design::Binary(b) => {
            let mut num = vec![0.0; b.cols()];
            let mut den = vec![0.0; b.cols()];
            for (i, &g) in b.assignment().iter().enumerate() {
                num[g] += z[i] * returns[i];
                den[g] += z[i];
            }
            let f = DVector::from_iterator(b.cols(), num.iter().zip(&den).map(|(n, d)| n / d));
            let residuals = DVector::from_iterator(
                returns.len(),
                b.assignment().iter().zip(returns.iter()).map(|(&g, r)| r - f[g]),
            );
            Ok(RegressionFit {
                residuals,
                factor_returns: f,
            })
        }
        Design::Dense(y) => {
            let mut zy = y.clone();
            for (i, s) in z.iter().enumerate() {
                zy.row_mut(i).scale_mut(*s);
            }
            let q = y.transpose() * &zy;
            let rhs = zy.transpose() * returns;
            let chol = q.cholesky().ok_or(PortfolioError::RankDeficient {
                column: *spec.kept_columns.last().unwrap_or(&0),
                depends_on: Vec::new(),
            })?;
            let f = chol.solve(&rhs);
            let residuals = returns - y * &f;
            Ok(RegressionFit {
                residuals,
                factor_returns: f,
            })
        }
    }
}

/// `h = −Zε · I / Σ|Zε|`.
pub fn regression_holdings(
    residuals: &DVector<f64>,
    weights: &DVector<f64>,
    investment: f64,
) -> Result<Holdings, PortfolioError> {
    if residuals.len() != weights.len() {
        return Err(PortfolioError::DimensionMismatch(format!(
            "{} residuals and {} weights",
            residuals.len(),
            weights.len()
        )));
    }
    let signal = -residuals.component_mul(weights);
    Holdings::from_direction(signal, investment).map_err(|e| match e {
        PortfolioError::NoTrade(_) => PortfolioError::NoTrade("all regression residuals are zero"),
        other => other,
    })
}
