use nalgebra::{DMatrix, DVector};

use super::{FactorModelLevel, NestedRiskModel, RiskModelError, Terminal};
use crate::taxonomy::ClassificationTree;

/// Nested model for binary industry factors plus `U` non-binary style factors.
///
/// Style factors pass through every level unchanged: each level's loadings are
/// `diag(binary block, I_U)` and the style rows carry zero specific variance at
/// the intermediate levels. The terminal covariance spans the coarsest
/// classification level plus the style factors.
///
/// `group_variances[l]` holds the specific variances of the groups at level `l`
/// for every level except the coarsest.
pub fn extend_with_style(
    tree: &ClassificationTree,
    style_loadings: &DMatrix<f64>,
    terminal_fcm: DMatrix<f64>,
    specific: &DVector<f64>,
    group_variances: &[DVector<f64>],
) -> Result<NestedRiskModel, RiskModelError> {
    let n = tree.n_stocks();
    let depth = tree.depth();
    let cards = tree.cardinalities();
    let u = style_loadings.ncols();
    if style_loadings.nrows() != n {
        return Err(RiskModelError::DimensionMismatch(format!(
            "style loadings have {} rows for {n} stocks",
            style_loadings.nrows()
        )));
    }
    if group_variances.len() != depth - 1 {
        return Err(RiskModelError::DimensionMismatch(format!(
            "expected group variances for {} levels, got {}",
            depth - 1,
            group_variances.len()
        )));
    }
    let mut omega = DMatrix::zeros(n, cards[0] + u);
    omega.columns_mut(0, cards[0]).copy_from(&tree.level_loadings(0).to_matrix());
    omega.columns_mut(cards[0], u).copy_from(style_loadings);
    let mut levels = vec![FactorModelLevel::new(omega, specific.clone())?];
    for l in 1..depth {
        let (rows, cols) = (cards[l - 1], cards[l]);
        let mut loadings = DMatrix::zeros(rows + u, cols + u);
        loadings
            .view_mut((0, 0), (rows, cols))
            .copy_from(&tree.level_loadings(l).to_matrix());
        loadings
            .view_mut((rows, cols), (u, u))
            .copy_from(&DMatrix::<f64>::identity(u, u));
        let v = &group_variances[l - 1];
        if v.len() != rows {
            return Err(RiskModelError::DimensionMismatch(format!(
                "level {} has {rows} groups but {} variances",
                l - 1,
                v.len()
            )));
        }
        let spec = DVector::from_iterator(rows + u, v.iter().copied().chain(std::iter::repeat_n(0.0, u)));
        levels.push(FactorModelLevel::new(loadings, spec)?);
    }
    NestedRiskModel::new(levels, Terminal::ExplicitFcm(terminal_fcm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riskmodel::{BinaryRiskModel, BinaryVariances};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tree() -> ClassificationTree {
        ClassificationTree::three_level(
            vec![0, 1, 1, 2, 3, 3, 4],
            vec![0, 0, 1, 2, 2],
            vec![0, 1, 1],
            (5, 3, 2),
        )
        .unwrap()
    }

    /// Direct expansion of the style-extended equations with explicit index
    /// bookkeeping, kept independent of the nested-model code path.
    fn brute_force(
        t: &ClassificationTree,
        style: &DMatrix<f64>,
        theta: &DMatrix<f64>,
        xi2: &DVector<f64>,
        zeta2: &DVector<f64>,
        eta2: &DVector<f64>,
    ) -> DMatrix<f64> {
        let n = t.n_stocks();
        let (k, f, l) = (t.cardinalities()[0], t.cardinalities()[1], t.cardinalities()[2]);
        let u = style.ncols();
        let g = t.stock_groups(0);
        let s = &t.levels()[1].parent_of;
        let tt = &t.levels()[2].parent_of;
        // Ω over (A, μ)
        let omega = |i: usize, a: usize| -> f64 {
            if a < k {
                f64::from(u8::from(g[i] == a))
            } else {
                style[(i, a - k)]
            }
        };
        let lambda = |a: usize, b: usize| -> f64 {
            match (a < k, b < f) {
                (true, true) => f64::from(u8::from(s[a] == b)),
                (false, false) => f64::from(u8::from(a - k == b - f)),
                _ => 0.0,
            }
        };
        let delta = |a: usize, b: usize| -> f64 {
            match (a < f, b < l) {
                (true, true) => f64::from(u8::from(tt[a] == b)),
                (false, false) => f64::from(u8::from(a - f == b - l)),
                _ => 0.0,
            }
        };
        let zeta = |a: usize| if a < k { zeta2[a] } else { 0.0 };
        let eta = |a: usize| if a < f { eta2[a] } else { 0.0 };
        let omega_t = |i: usize, a: usize| (0..k + u).map(|b| omega(i, b) * lambda(b, a)).sum::<f64>();
        let omega_h = |i: usize, a: usize| (0..f + u).map(|b| omega_t(i, b) * delta(b, a)).sum::<f64>();
        DMatrix::from_fn(n, n, |i, j| {
            let mut v = if i == j { xi2[i] } else { 0.0 };
            for a in 0..k + u {
                v += zeta(a) * omega(i, a) * omega(j, a);
            }
            for a in 0..f + u {
                v += eta(a) * omega_t(i, a) * omega_t(j, a);
            }
            for a in 0..l + u {
                for b in 0..l + u {
                    v += omega_h(i, a) * theta[(a, b)] * omega_h(j, b);
                }
            }
            v
        })
    }

    #[test]
    fn no_style_factors_reduces_to_binary_model() {
        let t = tree();
        let xi2 = DVector::from_element(7, 0.2);
        let zeta2 = DVector::from_element(5, 0.2);
        let eta2 = DVector::from_element(3, 0.2);
        let theta = DMatrix::from_row_slice(2, 2, &[0.4, 0.2, 0.2, 0.4]);
        let m = extend_with_style(&t, &DMatrix::zeros(7, 0), theta, &xi2, &[zeta2, eta2]).unwrap();
        let binary = BinaryRiskModel::new(t.clone(), BinaryVariances::uniform(&t, 0.2, &[0.2, 0.2, 0.2], 0.2))
            .unwrap()
            .dense();
        assert!((m.flatten().gamma() - binary).amax() < 1e-15);
    }

    #[test]
    fn null_style_factor_changes_nothing() {
        let t = tree();
        let xi2 = DVector::from_element(7, 0.3);
        let zeta2 = DVector::from_element(5, 0.1);
        let eta2 = DVector::from_element(3, 0.25);
        let theta = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.6]);
        let mut theta_u = DMatrix::zeros(3, 3);
        theta_u.view_mut((0, 0), (2, 2)).copy_from(&theta);
        let pure = extend_with_style(&t, &DMatrix::zeros(7, 0), theta, &xi2, &[zeta2.clone(), eta2.clone()]).unwrap();
        let null = extend_with_style(&t, &DMatrix::zeros(7, 1), theta_u, &xi2, &[zeta2, eta2]).unwrap();
        assert!((pure.flatten().gamma() - null.flatten().gamma()).amax() < 1e-15);
    }

    #[test]
    fn random_style_model_matches_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = tree();
        for _ in 0..10 {
            let style = DMatrix::from_fn(7, 2, |_, _| rng.random_range(-1.0..1.0));
            let a = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
            let theta = &a * a.transpose();
            let xi2 = DVector::from_fn(7, |_, _| rng.random_range(0.1..1.0));
            let zeta2 = DVector::from_fn(5, |_, _| rng.random_range(0.0..1.0));
            let eta2 = DVector::from_fn(3, |_, _| rng.random_range(0.0..1.0));
            let m = extend_with_style(&t, &style, theta.clone(), &xi2, &[zeta2.clone(), eta2.clone()]).unwrap();
            let expected = brute_force(&t, &style, &theta, &xi2, &zeta2, &eta2);
            assert!((m.flatten().gamma() - &expected).amax() < 1e-12);
            assert!((m.expand() - &expected).amax() < 1e-12);
            // style rows have zero specific variance below the stock level
            for level in &m.levels()[1..] {
                let rows = level.rows();
                assert!(level.specific_variances.rows(rows - 2, 2).iter().all(|v| *v == 0.0));
            }
        }
    }

    #[test]
    fn dimension_errors() {
        let t = tree();
        let r = extend_with_style(
            &t,
            &DMatrix::zeros(6, 1),
            DMatrix::identity(3, 3),
            &DVector::from_element(7, 0.1),
            &[DVector::zeros(5), DVector::zeros(3)],
        );
        assert!(matches!(r, Err(RiskModelError::DimensionMismatch(_))));
        let r = extend_with_style(
            &t,
            &DMatrix::zeros(7, 1),
            DMatrix::identity(2, 2),
            &DVector::from_element(7, 0.1),
            &[DVector::zeros(5), DVector::zeros(3)],
        );
        assert!(matches!(r, Err(RiskModelError::DimensionMismatch(_))));
    }
}
