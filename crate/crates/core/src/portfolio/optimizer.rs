use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{Holdings, PortfolioError};

/// Direction norms below this fraction of `‖Θ⁻¹E‖` are treated as zero.
const DEGENERATE_TOL: f64 = 1e-12;

/// Applies `Θ⁻¹` to vectors.
pub trait CovarianceSolver {
    fn dim(&self) -> usize;
    fn solve(&self, v: &DVector<f64>) -> Result<DVector<f64>, PortfolioError>;
}

/// Dense covariance factored once by Cholesky.
#[derive(Debug, Clone)]
pub struct DenseCovariance {
    chol: Cholesky<f64, Dyn>,
}

impl DenseCovariance {
    pub fn new(cov: DMatrix<f64>) -> Result<Self, PortfolioError> {
        if !cov.is_square() {
            return Err(PortfolioError::DimensionMismatch(format!(
                "covariance is {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let chol = cov.cholesky().ok_or(PortfolioError::SingularCovariance)?;
        Ok(Self { chol })
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

impl CovarianceSolver for DenseCovariance {
    fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    fn solve(&self, v: &DVector<f64>) -> Result<DVector<f64>, PortfolioError> {
        Ok(self.chol.solve(v))
    }
}

/// Maximizes `E·h / √(hᵀΘh)` subject to `Σh = 0`, scaled to `Σ|h| = I`:
///
/// `h ∝ Θ⁻¹E − Θ⁻¹𝟙 (𝟙ᵀΘ⁻¹E) / (𝟙ᵀΘ⁻¹𝟙)`, with a positive proportionality
/// constant.
pub fn optimize_sharpe(
    expected: &DVector<f64>,
    cov: &dyn CovarianceSolver,
    investment: f64,
) -> Result<Holdings, PortfolioError> {
    let n = expected.len();
    if cov.dim() != n {
        return Err(PortfolioError::DimensionMismatch(format!(
            "{n} expected returns for a {}-dimensional covariance",
            cov.dim()
        )));
    }
    let inv_e = cov.solve(expected)?;
    let inv_one = cov.solve(&DVector::from_element(n, 1.0))?;
    let denom = inv_one.sum();
    if !(denom > 0.0 && denom.is_finite()) {
        return Err(PortfolioError::SingularCovariance);
    }
    let direction = &inv_e - &inv_one * (inv_e.sum() / denom);
    let scale = inv_e.amax();
    if scale == 0.0 || direction.amax() <= DEGENERATE_TOL * scale {
        return Err(PortfolioError::NoTrade(
            "expected returns are constant across stocks",
        ));
    }
    Holdings::from_direction(direction, investment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::portfolio::{regression_holdings, weighted_regression, RegressionSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn identity_examples() {
        let id = DenseCovariance::new(DMatrix::identity(2, 2)).unwrap();
        let h = optimize_sharpe(&v(&[1.0, -1.0]), &id, 2.0).unwrap();
        assert_eq!(h.positions, v(&[1.0, -1.0]));
        let h = optimize_sharpe(&v(&[2.0, 0.0]), &id, 2.0).unwrap();
        assert_eq!(h.positions, v(&[1.0, -1.0]));
    }

    #[test]
    fn constant_expected_returns_do_not_trade() {
        let id = DenseCovariance::new(DMatrix::identity(3, 3)).unwrap();
        assert!(matches!(
            optimize_sharpe(&v(&[0.5, 0.5, 0.5]), &id, 1.0),
            Err(PortfolioError::NoTrade(_))
        ));
        assert!(matches!(
            optimize_sharpe(&v(&[0.0, 0.0, 0.0]), &id, 1.0),
            Err(PortfolioError::NoTrade(_))
        ));
    }

    #[test]
    fn singular_covariance_rejected() {
        assert!(matches!(
            DenseCovariance::new(DMatrix::from_element(2, 2, 1.0)),
            Err(PortfolioError::SingularCovariance)
        ));
    }

    #[test]
    fn diagonal_covariance_matches_weighted_intercept_regression() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = 12;
            let c = DVector::from_fn(n, |_, _| rng.random_range(0.01..4.0));
            let e = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let cov = DenseCovariance::new(DMatrix::from_diagonal(&c)).unwrap();
            let h = optimize_sharpe(&e, &cov, 10.0).unwrap();
            let z = c.map(|x| 1.0 / x);
            let fit = weighted_regression(&e, &RegressionSpec::intercept(z.clone()).unwrap()).unwrap();
            // regression holdings are short the residual; the optimizer is long E
            let r = regression_holdings(&(-fit.residuals), &z, 10.0).unwrap();
            assert!((h.positions - r.positions).amax() < 1e-12);
        }
    }

    #[test]
    fn scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 6;
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let theta = &a * a.transpose() + DMatrix::identity(n, n);
        let e = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let base = optimize_sharpe(&e, &DenseCovariance::new(theta.clone()).unwrap(), 1.0).unwrap();
        let scaled_e = optimize_sharpe(&(&e * 3.5), &DenseCovariance::new(theta.clone()).unwrap(), 1.0).unwrap();
        let scaled_t = optimize_sharpe(&e, &DenseCovariance::new(theta * 0.01).unwrap(), 1.0).unwrap();
        assert!((&base.positions - scaled_e.positions).amax() < 1e-12);
        assert!((&base.positions - scaled_t.positions).amax() < 1e-12);
        assert!(base.net().abs() < 1e-12);
        assert!((base.gross() - 1.0).abs() < 1e-12);
    }
}
