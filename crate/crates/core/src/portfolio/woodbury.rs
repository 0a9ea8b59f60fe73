use nalgebra::{DMatrix, DVector, Dyn, LU};

use super::{CovarianceSolver, DenseCovariance, PortfolioError};
use crate::riskmodel::{FlatFactorModel, RiskModelError};

/// Pivot ratio below which the small system is considered singular.
const PIVOT_TOL: f64 = 1e-13;

/// `Θ⁻¹` for `Θ = D + ω φ ωᵀ`, applied through
///
/// `Θ⁻¹ = D⁻¹ − D⁻¹ ω (I + φ M)⁻¹ φ ωᵀ D⁻¹`, `M = ωᵀ D⁻¹ ω`,
///
/// which needs only an `m × m` factorization (`m` = number of factors) and
/// never inverts `φ`, so zero blocks in `φ` are fine.
#[derive(Debug, Clone)]
pub struct FactorCovarianceInverse {
    inner: Inner,
}

#[derive(Debug, Clone)]
enum Inner {
    LowRank {
        inv_specific: DVector<f64>,
        loadings: DMatrix<f64>,
        fcm: DMatrix<f64>,
        small: LU<f64, Dyn, Dyn>,
    },
    Dense(DenseCovariance),
}

/// Factors the low-rank update once; falls back to a dense Cholesky when the
/// `m × m` system is numerically singular.
pub fn invert_factor_covariance(
    model: &FlatFactorModel,
) -> Result<FactorCovarianceInverse, PortfolioError> {
    let specific = model.specific_variances();
    if let Some((index, &value)) = specific.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(RiskModelError::NonPositiveVariance { index, value }.into());
    }
    let inv_specific = specific.map(|v| 1.0 / v);
    let loadings = model.loadings().clone();
    let m = loadings.ncols();
    let mut scaled = loadings.clone();
    for (i, s) in inv_specific.iter().enumerate() {
        scaled.row_mut(i).scale_mut(*s);
    }
    let gram = loadings.transpose() * scaled;
    let fcm = model.fcm();
    let system = DMatrix::identity(m, m) + &fcm * gram;
    let small = system.lu();
    let u = small.u();
    let diag = u.diagonal().map(f64::abs);
    let well_posed = m == 0 || (diag.min() > PIVOT_TOL * diag.max() && diag.iter().all(|d| d.is_finite()));
    let inner = if well_posed {
        Inner::LowRank {
            inv_specific,
            loadings,
            fcm,
            small,
        }
    } else {
        log::warn!("factor system is numerically singular; falling back to dense inversion");
        Inner::Dense(DenseCovariance::new(model.gamma())?)
    };
    Ok(FactorCovarianceInverse { inner })
}

impl FactorCovarianceInverse {
    pub fn is_low_rank(&self) -> bool {
        matches!(self.inner, Inner::LowRank { .. })
    }
}

impl CovarianceSolver for FactorCovarianceInverse {
    fn dim(&self) -> usize {
        match &self.inner {
            Inner::LowRank { inv_specific, .. } => inv_specific.len(),
            Inner::Dense(d) => d.dim(),
        }
    }

    fn solve(&self, v: &DVector<f64>) -> Result<DVector<f64>, PortfolioError> {
        match &self.inner {
            Inner::Dense(d) => d.solve(v),
            Inner::LowRank {
                inv_specific,
                loadings,
                fcm,
                small,
            } => {
                if v.len() != inv_specific.len() {
                    return Err(PortfolioError::DimensionMismatch(format!(
                        "vector of length {} for a {}-dimensional covariance",
                        v.len(),
                        inv_specific.len()
                    )));
                }
                let y = v.component_mul(inv_specific);
                if loadings.ncols() == 0 {
                    return Ok(y);
                }
                let t = fcm * (loadings.transpose() * &y);
                let u = small.solve(&t).ok_or(PortfolioError::SingularCovariance)?;
                let correction = (loadings * u).component_mul(inv_specific);
                Ok(y - correction)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riskmodel::{FcmBlock, FlatFactorModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_factor_model_is_diagonal() {
        let d = DVector::from_vec(vec![0.5, 2.0, 4.0]);
        let model = FlatFactorModel::new(DMatrix::zeros(3, 0), vec![], d).unwrap();
        let inv = invert_factor_covariance(&model).unwrap();
        let x = inv.solve(&DVector::from_element(3, 1.0)).unwrap();
        assert_eq!(x, DVector::from_vec(vec![2.0, 0.5, 0.25]));
    }

    #[test]
    fn rank_one_market_matches_sherman_morrison() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 10;
        let d = DVector::from_fn(n, |_, _| rng.random_range(0.1..2.0));
        let x = 0.7;
        let model = FlatFactorModel::new(
            DMatrix::from_element(n, 1, 1.0),
            vec![FcmBlock::Dense(DMatrix::from_element(1, 1, x))],
            d.clone(),
        )
        .unwrap();
        let inv = invert_factor_covariance(&model).unwrap();
        let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        // (D + X 11ᵀ)⁻¹ v = D⁻¹v − X D⁻¹1 (1ᵀD⁻¹v) / (1 + X 1ᵀD⁻¹1)
        let dinv = d.map(|s| 1.0 / s);
        let dinv_v = v.component_mul(&dinv);
        let expected = &dinv_v - &dinv * (x * dinv_v.sum() / (1.0 + x * dinv.sum()));
        assert!((inv.solve(&v).unwrap() - expected).amax() < 1e-13);
    }

    #[test]
    fn low_rank_matches_dense_solve() {
        let n = 4;
        let model = FlatFactorModel::new(
            DMatrix::from_element(n, 1, 1.0),
            vec![FcmBlock::Dense(DMatrix::from_element(1, 1, 1.0))],
            DVector::from_element(n, 1.0),
        )
        .unwrap();
        let inv = invert_factor_covariance(&model).unwrap();
        assert!(inv.is_low_rank());
        let dense = DenseCovariance::new(model.gamma()).unwrap();
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        assert!((inv.solve(&v).unwrap() - dense.solve(&v).unwrap()).amax() < 1e-14);
    }

    #[test]
    fn singular_factor_system_falls_back_to_dense() {
        // I + φM = 1 - 0.25 * 4 = 0, and Θ = I - 0.25·11ᵀ is singular too
        let n = 4;
        let model = FlatFactorModel::new(
            DMatrix::from_element(n, 1, 1.0),
            vec![FcmBlock::Dense(DMatrix::from_element(1, 1, -0.25))],
            DVector::from_element(n, 1.0),
        )
        .unwrap();
        assert!(matches!(
            invert_factor_covariance(&model),
            Err(PortfolioError::SingularCovariance)
        ));
    }

    #[test]
    fn nonpositive_specific_variance_rejected() {
        let model = FlatFactorModel::new(DMatrix::zeros(2, 0), vec![], DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!(invert_factor_covariance(&model).is_err());
    }
}
