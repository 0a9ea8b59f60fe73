//! Nested models over a binary classification, and the heuristic correlation
//! model built from fixed level weights.

use nalgebra::{DMatrix, DVector};

use super::{FactorModelLevel, FcmBlock, FlatFactorModel, NestedRiskModel, RiskModelError, Terminal};
use crate::taxonomy::ClassificationTree;

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Specific variances of a binary single-factor nested model: one per stock,
/// one per group at every level, and the intercept factor's variance `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryVariances {
    pub specific: DVector<f64>,
    /// `levels[l][g]`: variance of group `g` at level `l` (finest first).
    pub levels: Vec<DVector<f64>>,
    pub market: f64,
}

impl BinaryVariances {
    /// The same variance for every member of each level.
    pub fn uniform(tree: &ClassificationTree, specific: f64, levels: &[f64], market: f64) -> Self {
        Self {
            specific: DVector::from_element(tree.n_stocks(), specific),
            levels: tree
                .cardinalities()
                .iter()
                .zip(levels)
                .map(|(&n, &v)| DVector::from_element(n, v))
                .collect(),
            market,
        }
    }

    fn check(&self, tree: &ClassificationTree) -> Result<(), RiskModelError> {
        if self.specific.len() != tree.n_stocks() || self.levels.len() != tree.depth() {
            return Err(RiskModelError::DimensionMismatch(format!(
                "variances cover {} stocks and {} levels; tree has {} stocks and {} levels",
                self.specific.len(),
                self.levels.len(),
                tree.n_stocks(),
                tree.depth()
            )));
        }
        for (l, (v, n)) in self.levels.iter().zip(tree.cardinalities()).enumerate() {
            if v.len() != n {
                return Err(RiskModelError::DimensionMismatch(format!(
                    "level {l} has {n} groups but {} variances",
                    v.len()
                )));
            }
        }
        let all = std::iter::once(&self.specific).chain(self.levels.iter());
        for (l, v) in all.enumerate() {
            if let Some((index, &value)) = v.iter().enumerate().find(|(_, x)| !(**x >= 0.0)) {
                return Err(RiskModelError::NegativeVariance { level: l, index, value });
            }
        }
        if !(self.market >= 0.0) {
            return Err(RiskModelError::NegativeScalarVariance(self.market));
        }
        Ok(())
    }
}

/// `Γ_ij = ξ_i² δ_ij + Σ_levels v_{g(i)} δ_{g(i),g(j)} + X`.
pub fn binary_gamma_entry(
    tree: &ClassificationTree,
    variances: &BinaryVariances,
    i: usize,
    j: usize,
) -> f64 {
    let mut total = if i == j { variances.specific[i] } else { 0.0 };
    let (mut gi, mut gj) = (tree.levels()[0].parent_of[i], tree.levels()[0].parent_of[j]);
    for (l, map) in tree.levels().iter().enumerate() {
        if l > 0 {
            gi = map.parent_of[gi];
            gj = map.parent_of[gj];
        }
        if gi == gj {
            total += variances.levels[l][gi];
        }
    }
    total + variances.market
}

/// A nested model over a binary tree, kept in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryRiskModel {
    tree: ClassificationTree,
    variances: BinaryVariances,
}

impl BinaryRiskModel {
    pub fn new(tree: ClassificationTree, variances: BinaryVariances) -> Result<Self, RiskModelError> {
        variances.check(&tree)?;
        Ok(Self { tree, variances })
    }

    pub fn tree(&self) -> &ClassificationTree {
        &self.tree
    }

    pub fn variances(&self) -> &BinaryVariances {
        &self.variances
    }

    pub fn n(&self) -> usize {
        self.tree.n_stocks()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        binary_gamma_entry(&self.tree, &self.variances, i, j)
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = self.entry(i, j);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }

    /// The general nested form: stock, sub-industry, ..., sector levels, then an
    /// intercept-loaded level whose factor carries `X` (absent when `X = 0`).
    pub fn to_nested(&self) -> NestedRiskModel {
        let depth = self.tree.depth();
        let mut levels = Vec::with_capacity(depth + 1);
        levels.push(FactorModelLevel {
            loadings: self.tree.level_loadings(0).to_matrix(),
            specific_variances: self.variances.specific.clone(),
        });
        for l in 1..depth {
            levels.push(FactorModelLevel {
                loadings: self.tree.level_loadings(l).to_matrix(),
                specific_variances: self.variances.levels[l - 1].clone(),
            });
        }
        let top = self.tree.cardinalities()[depth - 1];
        levels.push(FactorModelLevel {
            loadings: DMatrix::from_element(top, 1, 1.0),
            specific_variances: self.variances.levels[depth - 1].clone(),
        });
        let terminal = if self.variances.market > 0.0 {
            Terminal::ScalarVariance(self.variances.market)
        } else {
            Terminal::None
        };
        NestedRiskModel { levels, terminal }
    }

    /// The flattened `(K + F + L [+ 1])`-factor form, built directly from the
    /// composed binary loadings.
    pub fn flatten(&self) -> FlatFactorModel {
        let n = self.n();
        let cards = self.tree.cardinalities();
        let with_market = self.variances.market > 0.0;
        let width = cards.iter().sum::<usize>() + usize::from(with_market);
        let mut loadings = DMatrix::zeros(n, width);
        let mut blocks = Vec::with_capacity(cards.len() + 1);
        let mut offset = 0;
        for (l, &k) in cards.iter().enumerate() {
            for (i, &g) in self.tree.stock_groups(l).iter().enumerate() {
                loadings[(i, offset + g)] = 1.0;
            }
            blocks.push(FcmBlock::Diagonal(self.variances.levels[l].clone()));
            offset += k;
        }
        if with_market {
            loadings.column_mut(offset).fill(1.0);
            blocks.push(FcmBlock::Dense(DMatrix::from_element(1, 1, self.variances.market)));
        }
        FlatFactorModel {
            loadings,
            blocks,
            specific_variances: self.variances.specific.clone(),
        }
    }
}

/// Fractions of unit variance assigned to the stock-specific term, each
/// classification level (finest first), and the intercept factor.
#[derive(Debug, Clone, PartialEq)]
pub struct AnsatzWeights {
    pub specific: f64,
    pub levels: Vec<f64>,
    pub market: f64,
}

impl AnsatzWeights {
    /// Equal weights `1/(depth + 2)`; `1/5` each for three levels.
    pub fn equal(depth: usize) -> Self {
        let w = 1.0 / (depth + 2) as f64;
        Self {
            specific: w,
            levels: vec![w; depth],
            market: w,
        }
    }

    /// Half specific, half finest level, nothing else.
    pub fn two_term(depth: usize) -> Self {
        let mut levels = vec![0.0; depth];
        if let Some(first) = levels.first_mut() {
            *first = 0.5;
        }
        Self {
            specific: 0.5,
            levels,
            market: 0.0,
        }
    }

    /// `[specific, level_0, ..., level_{d-1}, market]`.
    pub fn from_slice(w: &[f64]) -> Result<Self, RiskModelError> {
        if w.len() < 2 {
            return Err(RiskModelError::WeightCount {
                expected: 3,
                actual: w.len(),
            });
        }
        Ok(Self {
            specific: w[0],
            levels: w[1..w.len() - 1].to_vec(),
            market: w[w.len() - 1],
        })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.levels.len() + 2);
        v.push(self.specific);
        v.extend_from_slice(&self.levels);
        v.push(self.market);
        v
    }

    pub fn validate(&self, depth: usize) -> Result<(), RiskModelError> {
        self.validate_count(depth)?;
        let sum: f64 = self.to_vec().iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(RiskModelError::WeightsNotNormalized(sum));
        }
        Ok(())
    }

    /// One weight per level, all finite and nonnegative; the sum is not checked.
    pub fn validate_count(&self, depth: usize) -> Result<(), RiskModelError> {
        let all = self.to_vec();
        if self.levels.len() != depth {
            return Err(RiskModelError::WeightCount {
                expected: depth + 2,
                actual: all.len(),
            });
        }
        if let Some((index, &value)) = all
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w >= 0.0))
        {
            return Err(RiskModelError::InvalidWeight { index, value });
        }
        Ok(())
    }
}

/// Models the correlation matrix (unit diagonal) with every stock, group and
/// the market carrying its level's fixed weight.
pub fn heuristic_correlation_model(
    tree: &ClassificationTree,
    weights: &AnsatzWeights,
) -> Result<BinaryRiskModel, RiskModelError> {
    weights.validate(tree.depth())?;
    let variances = BinaryVariances::uniform(tree, weights.specific, &weights.levels, weights.market);
    BinaryRiskModel::new(tree.clone(), variances)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riskmodel::check_positive_definite;

    fn sample_tree() -> ClassificationTree {
        // stocks 0,1 share a sub-industry; 2 shares only the industry;
        // 3 only the sector; 4 is in another sector
        ClassificationTree::three_level(vec![0, 0, 1, 2, 3], vec![0, 0, 1, 2], vec![0, 0, 1], (4, 3, 2))
            .unwrap()
    }

    #[test]
    fn equal_weights_closed_form() {
        let t = sample_tree();
        let m = heuristic_correlation_model(&t, &AnsatzWeights::equal(3)).unwrap();
        for i in 0..5 {
            assert_eq!(m.entry(i, i), 1.0);
        }
        let close = |a: f64, b: f64| (a - b).abs() < 4.0 * f64::EPSILON;
        assert!(close(m.entry(0, 1), 4.0 / 5.0));
        assert!(close(m.entry(0, 2), 3.0 / 5.0));
        assert!(close(m.entry(0, 3), 2.0 / 5.0));
        assert!(close(m.entry(0, 4), 1.0 / 5.0));
    }

    #[test]
    fn zero_market_distinct_sectors() {
        let t = sample_tree();
        let v = BinaryVariances::uniform(&t, 0.3, &[0.3, 0.2, 0.2], 0.0);
        assert_eq!(binary_gamma_entry(&t, &v, 0, 4), 0.0);
        let m = BinaryRiskModel::new(t, v).unwrap();
        assert_eq!(m.to_nested().terminal(), &Terminal::None);
    }

    #[test]
    fn preset_weights() {
        let t = sample_tree();
        let two = heuristic_correlation_model(&t, &AnsatzWeights::two_term(3)).unwrap();
        assert_eq!(two.entry(0, 0), 1.0);
        assert_eq!(two.entry(0, 1), 0.5);
        assert_eq!(two.entry(0, 2), 0.0);

        let ident = heuristic_correlation_model(&t, &AnsatzWeights::from_slice(&[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap()).unwrap();
        assert_eq!(ident.dense(), DMatrix::identity(5, 5));
    }

    #[test]
    fn weight_validation() {
        let t = sample_tree();
        let w = AnsatzWeights::from_slice(&[0.2, 0.2, 0.2, 0.2, 0.1]).unwrap();
        assert!(matches!(
            heuristic_correlation_model(&t, &w),
            Err(RiskModelError::WeightsNotNormalized(_))
        ));
        let w = AnsatzWeights::from_slice(&[0.6, 0.2, 0.2, 0.2, -0.2]).unwrap();
        assert!(matches!(
            heuristic_correlation_model(&t, &w),
            Err(RiskModelError::InvalidWeight { index: 4, .. })
        ));
        let w = AnsatzWeights::from_slice(&[0.5, 0.5, 0.0]).unwrap();
        assert!(matches!(
            heuristic_correlation_model(&t, &w),
            Err(RiskModelError::WeightCount { .. })
        ));
    }

    #[test]
    fn nested_flat_and_closed_form_agree() {
        let t = sample_tree();
        let v = BinaryVariances {
            specific: DVector::from_vec(vec![0.3, 0.1, 0.2, 0.4, 0.5]),
            levels: vec![
                DVector::from_vec(vec![0.1, 0.2, 0.3, 0.4]),
                DVector::from_vec(vec![0.05, 0.15, 0.25]),
                DVector::from_vec(vec![0.11, 0.22]),
            ],
            market: 0.07,
        };
        let m = BinaryRiskModel::new(t, v).unwrap();
        let dense = m.dense();
        assert!((m.to_nested().expand() - &dense).amax() < 1e-15);
        assert!((m.to_nested().flatten().gamma() - &dense).amax() < 1e-15);
        assert!((m.flatten().gamma() - &dense).amax() < 1e-15);
        assert_eq!(m.flatten(), m.to_nested().flatten());
        assert!(check_positive_definite(&dense).unwrap().passed());
    }
}
