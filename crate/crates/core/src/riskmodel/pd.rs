use nalgebra::DMatrix;

use super::{check_symmetric, RiskModelError};

/// Eigenvalues within `PD_RELATIVE_TOL · λ_max` of zero are treated as zero.
pub const PD_RELATIVE_TOL: f64 = 1e-10;
/// Relative asymmetry above which a matrix is rejected.
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdReport {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// Whether a Cholesky factorization succeeded.
    pub cholesky_ok: bool,
    /// `λ_min ≥ -tol · λ_max`.
    pub positive_semidefinite: bool,
    /// `λ_min > tol · λ_max` (strict).
    pub positive_definite: bool,
}

impl PdReport {
    pub fn passed(&self) -> bool {
        self.positive_definite
    }
}

/// Spectrum and Cholesky check of a symmetric matrix.
pub fn check_positive_definite(m: &DMatrix<f64>) -> Result<PdReport, RiskModelError> {
    check_symmetric(m)?;
    if m.nrows() == 0 {
        return Ok(PdReport {
            min_eigenvalue: f64::INFINITY,
            max_eigenvalue: f64::NEG_INFINITY,
            cholesky_ok: true,
            positive_semidefinite: true,
            positive_definite: true,
        });
    }
    // symmetrize so tiny asymmetries do not leak into the eigen solver
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigenvalues();
    let (min, max) = (eig.min(), eig.max());
    let scale = max.abs().max(min.abs());
    Ok(PdReport {
        min_eigenvalue: min,
        max_eigenvalue: max,
        cholesky_ok: sym.cholesky().is_some(),
        positive_semidefinite: min >= -PD_RELATIVE_TOL * scale,
        positive_definite: min > PD_RELATIVE_TOL * scale,
    })
}
