//! Factor-model covariance construction.
//!
//! A one-level factor model is `Γ = diag(ξ²) + Ω Φ Ωᵀ`. A nested model keeps
//! replacing the factor covariance matrix `Φ` by another factor model, one
//! level at a time, until it reaches a small explicit matrix, a single
//! variance shared by everything (the intercept factor), or nothing at all.
//!
//! Every nested model is equivalent to a larger single-level model whose
//! loadings are the cumulative products of the level loadings and whose factor
//! covariance is block-diagonal: one diagonal block per intermediate level plus
//! at most one dense terminal block. [`NestedRiskModel::flatten`] produces that
//! form; [`NestedRiskModel::expand`] evaluates the recursion directly.

mod binary;
mod pd;
mod spec;
mod style;

pub use binary::{
    binary_gamma_entry, heuristic_correlation_model, AnsatzWeights, BinaryRiskModel,
    BinaryVariances,
};
pub use pd::{check_positive_definite, PdReport, PD_RELATIVE_TOL, SYMMETRY_TOL};
pub use spec::{ModelSpec, ModelTerminal};
pub use style::extend_with_style;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Largest `N` for which dense `N×N` covariance matrices are materialized by
/// default.
pub const DEFAULT_DENSE_CAP: usize = 4000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("negative specific variance {value} at level {level}, row {index}")]
    NegativeVariance { level: usize, index: usize, value: f64 },

    #[error("matrix is not symmetric: max |a_ij - a_ji| = {deviation:e} exceeds tolerance")]
    NotSymmetric { deviation: f64 },

    #[error("terminal factor covariance is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),

    #[error("negative scalar factor variance {0}")]
    NegativeScalarVariance(f64),

    #[error("variance at index {index} must be positive, got {value}")]
    NonPositiveVariance { index: usize, value: f64 },

    #[error("ansatz weights sum to {0}, expected 1")]
    WeightsNotNormalized(f64),

    #[error("ansatz weight {index} is negative or not finite: {value}")]
    InvalidWeight { index: usize, value: f64 },

    #[error("expected {expected} ansatz weights (specific + one per level + market), got {actual}")]
    WeightCount { expected: usize, actual: usize },

    #[error("N = {n} exceeds the dense matrix cap of {cap}")]
    TooLargeForDense { n: usize, cap: usize },
}

/// One level of a nested model: loadings onto the next level's factors and the
/// specific variances of this level's rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModelLevel {
    pub loadings: DMatrix<f64>,
    pub specific_variances: DVector<f64>,
}

impl FactorModelLevel {
    pub fn new(
        loadings: DMatrix<f64>,
        specific_variances: DVector<f64>,
    ) -> Result<Self, RiskModelError> {
        if loadings.nrows() != specific_variances.len() {
            return Err(RiskModelError::DimensionMismatch(format!(
                "loadings have {} rows but {} specific variances were given",
                loadings.nrows(),
                specific_variances.len()
            )));
        }
        Ok(Self {
            loadings,
            specific_variances,
        })
    }

    pub fn rows(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn cols(&self) -> usize {
        self.loadings.ncols()
    }
}

/// How the innermost factor covariance matrix is specified.
#[derive(Debug, Clone, PartialEq)]
pub enum Terminal {
    /// A user-supplied symmetric PSD factor covariance matrix.
    ExplicitFcm(DMatrix<f64>),
    /// One intercept-loaded factor of variance `X` over the innermost factors,
    /// i.e. a terminal covariance of `X · 𝟙𝟙ᵀ`.
    ScalarVariance(f64),
    /// No terminal covariance: the "zero-factor" model.
    None,
}

/// A stack of factor-model levels, outermost (stocks) first.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedRiskModel {
    levels: Vec<FactorModelLevel>,
    terminal: Terminal,
}

/// A diagonal block of the flattened factor covariance, or the dense terminal.
#[derive(Debug, Clone, PartialEq)]
pub enum FcmBlock {
    Diagonal(DVector<f64>),
    Dense(DMatrix<f64>),
}

impl FcmBlock {
    pub fn dim(&self) -> usize {
        match self {
            FcmBlock::Diagonal(d) => d.len(),
            FcmBlock::Dense(m) => m.nrows(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            FcmBlock::Diagonal(d) => DMatrix::from_diagonal(d),
            FcmBlock::Dense(m) => m.clone(),
        }
    }
}

/// Single-level equivalent of a nested model: `Γ = diag(ξ²) + ω φ ωᵀ` with a
/// block-diagonal `φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatFactorModel {
    loadings: DMatrix<f64>,
    blocks: Vec<FcmBlock>,
    specific_variances: DVector<f64>,
}

/// `Γ = diag(ξ²) + Ω Φ Ωᵀ`.
pub fn gamma(
    level: &FactorModelLevel,
    fcm: &DMatrix<f64>,
) -> Result<DMatrix<f64>, RiskModelError> {
    if fcm.nrows() != level.cols() || fcm.ncols() != level.cols() {
        return Err(RiskModelError::DimensionMismatch(format!(
            "factor covariance is {}x{} but loadings have {} columns",
            fcm.nrows(),
            fcm.ncols(),
            level.cols()
        )));
    }
    check_symmetric(fcm)?;
    let mut g = &level.loadings * fcm * level.loadings.transpose();
    for (i, v) in level.specific_variances.iter().enumerate() {
        g[(i, i)] += v;
    }
    Ok(g)
}

pub(crate) fn check_symmetric(m: &DMatrix<f64>) -> Result<(), RiskModelError> {
    if !m.is_square() {
        return Err(RiskModelError::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let deviation = (m - m.transpose()).amax();
    if deviation > SYMMETRY_TOL * scale {
        return Err(RiskModelError::NotSymmetric { deviation });
    }
    Ok(())
}

impl NestedRiskModel {
    pub fn new(levels: Vec<FactorModelLevel>, terminal: Terminal) -> Result<Self, RiskModelError> {
        if levels.is_empty() {
            return Err(RiskModelError::DimensionMismatch(
                "a nested model needs at least one level".into(),
            ));
        }
        for (l, level) in levels.iter().enumerate() {
            if let Some((index, &value)) = level
                .specific_variances
                .iter()
                .enumerate()
                .find(|(_, v)| !(**v >= 0.0))
            {
                return Err(RiskModelError::NegativeVariance { level: l, index, value });
            }
            if l + 1 < levels.len() && level.cols() != levels[l + 1].rows() {
                return Err(RiskModelError::DimensionMismatch(format!(
                    "level {l} has {} factors but level {} has {} rows",
                    level.cols(),
                    l + 1,
                    levels[l + 1].rows()
                )));
            }
        }
        let innermost = levels.last().map(FactorModelLevel::cols).unwrap_or(0);
        match &terminal {
            Terminal::ExplicitFcm(m) => {
                if m.nrows() != innermost || m.ncols() != innermost {
                    return Err(RiskModelError::DimensionMismatch(format!(
                        "terminal covariance is {}x{} but the innermost level has {innermost} factors",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                let report = check_positive_definite(m)?;
                if !report.positive_semidefinite {
                    return Err(RiskModelError::NotPositiveSemidefinite(report.min_eigenvalue));
                }
            }
            Terminal::ScalarVariance(x) => {
                if !(*x >= 0.0) {
                    return Err(RiskModelError::NegativeScalarVariance(*x));
                }
            }
            Terminal::None => {}
        }
        Ok(Self { levels, terminal })
    }

    pub fn levels(&self) -> &[FactorModelLevel] {
        &self.levels
    }

    pub fn terminal(&self) -> &Terminal {
        &self.terminal
    }

    pub fn n(&self) -> usize {
        self.levels[0].rows()
    }

    /// Innermost factor covariance implied by the terminal.
    fn terminal_matrix(&self) -> DMatrix<f64> {
        let k = self.levels.last().map(FactorModelLevel::cols).unwrap_or(0);
        match &self.terminal {
            Terminal::ExplicitFcm(m) => m.clone(),
            Terminal::ScalarVariance(x) => DMatrix::from_element(k, k, *x),
            Terminal::None => DMatrix::zeros(k, k),
        }
    }

    /// Dense covariance by recursive substitution, innermost level first.
    pub fn expand(&self) -> DMatrix<f64> {
        let mut fcm = self.terminal_matrix();
        for level in self.levels.iter().rev() {
            let mut g = &level.loadings * &fcm * level.loadings.transpose();
            for (i, v) in level.specific_variances.iter().enumerate() {
                g[(i, i)] += v;
            }
            fcm = g;
        }
        fcm
    }

    pub fn flatten(&self) -> FlatFactorModel {
        let n = self.n();
        let mut blocks = Vec::new();
        let mut columns: Vec<DMatrix<f64>> = Vec::new();
        let mut cumulative = self.levels[0].loadings.clone();
        for (l, level) in self.levels.iter().enumerate().skip(1) {
            columns.push(cumulative.clone());
            blocks.push(FcmBlock::Diagonal(level.specific_variances.clone()));
            cumulative = &cumulative * &self.levels[l].loadings;
        }
        match &self.terminal {
            Terminal::ExplicitFcm(m) => {
                columns.push(cumulative);
                blocks.push(FcmBlock::Dense(m.clone()));
            }
            Terminal::ScalarVariance(x) => {
                let row_sums = cumulative.column_sum();
                columns.push(DMatrix::from_column_slice(n, 1, row_sums.as_slice()));
                blocks.push(FcmBlock::Dense(DMatrix::from_element(1, 1, *x)));
            }
            Terminal::None => {}
        }
        let width: usize = columns.iter().map(|c| c.ncols()).sum();
        let mut loadings = DMatrix::zeros(n, width);
        let mut offset = 0;
        for c in &columns {
            loadings.columns_mut(offset, c.ncols()).copy_from(c);
            offset += c.ncols();
        }
        FlatFactorModel {
            loadings,
            blocks,
            specific_variances: self.levels[0].specific_variances.clone(),
        }
    }
}

impl FlatFactorModel {
    /// Builds a flat model, checking that block sizes add up to the loadings
    /// width.
    pub fn new(
        loadings: DMatrix<f64>,
        blocks: Vec<FcmBlock>,
        specific_variances: DVector<f64>,
    ) -> Result<Self, RiskModelError> {
        let width: usize = blocks.iter().map(FcmBlock::dim).sum();
        if width != loadings.ncols() || specific_variances.len() != loadings.nrows() {
            return Err(RiskModelError::DimensionMismatch(format!(
                "loadings {}x{}, factor blocks total {width}, {} specific variances",
                loadings.nrows(),
                loadings.ncols(),
                specific_variances.len()
            )));
        }
        for b in &blocks {
            if let FcmBlock::Dense(m) = b {
                check_symmetric(m)?;
            }
        }
        Ok(Self {
            loadings,
            blocks,
            specific_variances,
        })
    }

    pub fn n(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn n_factors(&self) -> usize {
        self.loadings.ncols()
    }

    pub fn loadings(&self) -> &DMatrix<f64> {
        &self.loadings
    }

    pub fn blocks(&self) -> &[FcmBlock] {
        &self.blocks
    }

    pub fn specific_variances(&self) -> &DVector<f64> {
        &self.specific_variances
    }

    /// The full block-diagonal factor covariance `φ`.
    pub fn fcm(&self) -> DMatrix<f64> {
        let m = self.n_factors();
        let mut phi = DMatrix::zeros(m, m);
        let mut offset = 0;
        for b in &self.blocks {
            let d = b.dim();
            phi.view_mut((offset, offset), (d, d)).copy_from(&b.to_dense());
            offset += d;
        }
        phi
    }

    /// Dense covariance matrix.
    pub fn gamma(&self) -> DMatrix<f64> {
        let phi_omega_t = self.apply_fcm_to_loadings_t();
        let mut g = &self.loadings * phi_omega_t;
        for (i, v) in self.specific_variances.iter().enumerate() {
            g[(i, i)] += v;
        }
        g
    }

    pub fn gamma_capped(&self, cap: usize) -> Result<DMatrix<f64>, RiskModelError> {
        if self.n() > cap {
            return Err(RiskModelError::TooLargeForDense { n: self.n(), cap });
        }
        Ok(self.gamma())
    }

    /// `φ ωᵀ` using the block structure.
    fn apply_fcm_to_loadings_t(&self) -> DMatrix<f64> {
        let mut out = self.loadings.transpose();
        self.apply_fcm_in_place(&mut out);
        out
    }

    /// Multiplies the rows of `x` (`m × c`) by `φ` in place.
    pub(crate) fn apply_fcm_in_place(&self, x: &mut DMatrix<f64>) {
        let mut offset = 0;
        for b in &self.blocks {
            let d = b.dim();
            match b {
                FcmBlock::Diagonal(v) => {
                    for (r, s) in v.iter().enumerate() {
                        x.row_mut(offset + r).scale_mut(*s);
                    }
                }
                FcmBlock::Dense(m) => {
                    let rows = m * x.rows(offset, d);
                    x.rows_mut(offset, d).copy_from(&rows);
                }
            }
            offset += d;
        }
    }

    /// `Γ v` without forming `Γ`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut factor = DMatrix::from_column_slice(self.n_factors(), 1, (self.loadings.transpose() * v).as_slice());
        self.apply_fcm_in_place(&mut factor);
        let mut out = &self.loadings * factor.column(0);
        out += self.specific_variances.component_mul(v);
        out
    }

    /// The model of `S Γ S` for `S = diag(scale)`.
    pub fn scaled(&self, scale: &DVector<f64>) -> Result<Self, RiskModelError> {
        if scale.len() != self.n() {
            return Err(RiskModelError::DimensionMismatch(format!(
                "{} scale factors for {} stocks",
                scale.len(),
                self.n()
            )));
        }
        let mut loadings = self.loadings.clone();
        for (i, s) in scale.iter().enumerate() {
            loadings.row_mut(i).scale_mut(*s);
        }
        let specific_variances = self
            .specific_variances
            .zip_map(scale, |v, s| v * s * s);
        Ok(Self {
            loadings,
            blocks: self.blocks.clone(),
            specific_variances,
        })
    }

    /// The covariance model on a subset of stocks, in the given order.
    pub fn restrict(&self, stocks: &[usize]) -> Self {
        let loadings = self.loadings.select_rows(stocks.iter());
        let specific_variances = DVector::from_iterator(
            stocks.len(),
            stocks.iter().map(|&i| self.specific_variances[i]),
        );
        Self {
            loadings,
            blocks: self.blocks.clone(),
            specific_variances,
        }
    }
}

/// `Θ_ij = √C_ii √C_jj Γ_ij`, dense.
pub fn scale_correlation_to_covariance(
    correlation: &DMatrix<f64>,
    variances: &DVector<f64>,
) -> Result<DMatrix<f64>, RiskModelError> {
    let vol = volatilities(variances)?;
    if correlation.nrows() != vol.len() || correlation.ncols() != vol.len() {
        return Err(RiskModelError::DimensionMismatch(format!(
            "{}x{} correlation matrix for {} variances",
            correlation.nrows(),
            correlation.ncols(),
            vol.len()
        )));
    }
    Ok(DMatrix::from_fn(vol.len(), vol.len(), |i, j| {
        vol[i] * vol[j] * correlation[(i, j)]
    }))
}

/// `√C_ii`, rejecting nonpositive variances.
pub fn volatilities(variances: &DVector<f64>) -> Result<DVector<f64>, RiskModelError> {
    if let Some((index, &value)) = variances.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(RiskModelError::NonPositiveVariance { index, value });
    }
    Ok(variances.map(f64::sqrt))
}

/// Variance of the equally weighted cross-sectional mean return, with the
/// unbiased divisor. Each entry of `returns` is one date's cross-section.
/// This is the direct estimator for the single factor's variance `X`; the
/// heuristic correlation model uses a fixed weight instead.
pub fn market_variance(returns: &[DVector<f64>]) -> Option<f64> {
    if returns.len() < 2 {
        return None;
    }
    let market: Vec<f64> = returns.iter().map(|r| r.mean()).collect();
    let mean = market.iter().sum::<f64>() / market.len() as f64;
    let ss: f64 = market.iter().map(|m| (m - mean).powi(2)).sum();
    Some(ss / (market.len() - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_psd(rng: &mut ChaCha8Rng, k: usize) -> DMatrix<f64> {
        let a = random_matrix(rng, k, k);
        &a * a.transpose()
    }

    #[test]
    fn gamma_examples() {
        let level = FactorModelLevel::new(DMatrix::from_element(2, 1, 1.0), DVector::from_element(2, 1.0)).unwrap();
        assert_eq!(gamma(&level, &DMatrix::zeros(1, 1)).unwrap(), DMatrix::identity(2, 2));

        let level = FactorModelLevel::new(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
        let phi = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 5.0]));
        assert_eq!(gamma(&level, &phi).unwrap(), phi);

        assert!(matches!(
            gamma(&level, &DMatrix::zeros(3, 3)),
            Err(RiskModelError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn gamma_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (n, k) = (6, 2);
        let omega = random_matrix(&mut rng, n, k);
        let phi = random_psd(&mut rng, k);
        let xi2 = DVector::from_fn(n, |_, _| rng.random_range(0.1..1.0));
        let g = gamma(&FactorModelLevel::new(omega.clone(), xi2.clone()).unwrap(), &phi).unwrap();
        for i in 0..n {
            for j in 0..n {
                let mut expected = if i == j { xi2[i] } else { 0.0 };
                for a in 0..k {
                    for b in 0..k {
                        expected += omega[(i, a)] * phi[(a, b)] * omega[(j, b)];
                    }
                }
                assert!((g[(i, j)] - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn single_level_flatten_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let omega = random_matrix(&mut rng, 5, 3);
        let theta = random_psd(&mut rng, 3);
        let xi2 = DVector::from_element(5, 0.3);
        let m = NestedRiskModel::new(
            vec![FactorModelLevel::new(omega.clone(), xi2.clone()).unwrap()],
            Terminal::ExplicitFcm(theta.clone()),
        )
        .unwrap();
        let flat = m.flatten();
        assert_eq!(flat.loadings(), &omega);
        assert_eq!(flat.fcm(), theta);
        assert_eq!(flat.specific_variances(), &xi2);
    }

    #[test]
    fn flatten_matches_recursive_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for terminal_kind in 0..3 {
            let omega = random_matrix(&mut rng, 8, 4);
            let lambda = random_matrix(&mut rng, 4, 2);
            let levels = vec![
                FactorModelLevel::new(omega, DVector::from_fn(8, |_, _| rng.random_range(0.1..1.0))).unwrap(),
                FactorModelLevel::new(lambda, DVector::from_fn(4, |_, _| rng.random_range(0.0..1.0))).unwrap(),
            ];
            let terminal = match terminal_kind {
                0 => Terminal::ExplicitFcm(random_psd(&mut rng, 2)),
                1 => Terminal::ScalarVariance(0.7),
                _ => Terminal::None,
            };
            let m = NestedRiskModel::new(levels, terminal).unwrap();
            let diff = (m.flatten().gamma() - m.expand()).amax();
            assert!(diff < 1e-12, "terminal {terminal_kind}: {diff}");
        }
    }

    #[test]
    fn flat_apply_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = NestedRiskModel::new(
            vec![
                FactorModelLevel::new(random_matrix(&mut rng, 7, 3), DVector::from_element(7, 0.5)).unwrap(),
                FactorModelLevel::new(random_matrix(&mut rng, 3, 2), DVector::from_element(3, 0.2)).unwrap(),
            ],
            Terminal::ExplicitFcm(random_psd(&mut rng, 2)),
        )
        .unwrap();
        let flat = m.flatten();
        let v = DVector::from_fn(7, |_, _| rng.random_range(-1.0..1.0));
        assert!((flat.apply(&v) - flat.gamma() * &v).amax() < 1e-13);
        let s = DVector::from_fn(7, |_, _| rng.random_range(0.5..2.0));
        let scaled = flat.scaled(&s).unwrap().gamma();
        let direct = DMatrix::from_fn(7, 7, |i, j| s[i] * s[j] * flat.gamma()[(i, j)]);
        assert!((scaled - direct).amax() < 1e-13);
    }

    #[test]
    fn construction_errors() {
        let level = FactorModelLevel::new(DMatrix::identity(2, 2), DVector::from_vec(vec![0.1, -0.1])).unwrap();
        assert!(matches!(
            NestedRiskModel::new(vec![level], Terminal::None),
            Err(RiskModelError::NegativeVariance { index: 1, .. })
        ));
        let a = FactorModelLevel::new(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
        let b = FactorModelLevel::new(DMatrix::identity(3, 3), DVector::zeros(3)).unwrap();
        assert!(matches!(
            NestedRiskModel::new(vec![a.clone(), b], Terminal::None),
            Err(RiskModelError::DimensionMismatch(_))
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            NestedRiskModel::new(vec![a.clone()], Terminal::ExplicitFcm(asym)),
            Err(RiskModelError::NotSymmetric { .. })
        ));
        assert!(matches!(
            NestedRiskModel::new(vec![a], Terminal::ScalarVariance(-1.0)),
            Err(RiskModelError::NegativeScalarVariance(_))
        ));
    }

    #[test]
    fn scaling_examples() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0]);
        assert_eq!(scale_correlation_to_covariance(&g, &DVector::from_element(2, 1.0)).unwrap(), g);
        let theta = scale_correlation_to_covariance(&g, &DVector::from_vec(vec![4.0, 9.0])).unwrap();
        assert_eq!(theta[(0, 0)], 4.0);
        assert_eq!(theta[(1, 1)], 9.0);
        assert!((theta[(0, 1)] - 1.2).abs() < 1e-15);
        assert_eq!(
            scale_correlation_to_covariance(&g, &DVector::from_vec(vec![4.0, 0.0])),
            Err(RiskModelError::NonPositiveVariance { index: 1, value: 0.0 })
        );
    }

    #[test]
    fn scaling_preserves_positive_definiteness_and_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let n = 8;
            let a = random_matrix(&mut rng, n, n);
            let cov = &a * a.transpose() + DMatrix::identity(n, n) * 0.1;
            let d = cov.diagonal().map(|v| 1.0 / v.sqrt());
            let corr = DMatrix::from_fn(n, n, |i, j| cov[(i, j)] * d[i] * d[j]);
            let c = DVector::from_fn(n, |_, _| rng.random_range(0.01..4.0));
            let theta = scale_correlation_to_covariance(&corr, &c).unwrap();
            let eig = theta.clone().symmetric_eigenvalues();
            assert!(eig.min() > 0.0);
            let back = DMatrix::from_fn(n, n, |i, j| theta[(i, j)] / (theta[(i, i)] * theta[(j, j)]).sqrt());
            assert!((back - &corr).amax() < 1e-12);
        }
    }

    #[test]
    fn market_variance_of_constant_cross_sections() {
        let r = vec![
            DVector::from_vec(vec![1.0, 1.0]),
            DVector::from_vec(vec![-1.0, -1.0]),
        ];
        assert_eq!(market_variance(&r), Some(2.0));
        assert_eq!(market_variance(&r[..1]), None);
    }
}
