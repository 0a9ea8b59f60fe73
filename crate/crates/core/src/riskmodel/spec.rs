use nalgebra::{DMatrix, DVector};

use super::{
    extend_with_style, heuristic_correlation_model, AnsatzWeights, FlatFactorModel, NestedRiskModel,
    RiskModelError,
};
use crate::taxonomy::ClassificationTree;

/// What the classification levels nest into.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelTerminal {
    /// One intercept factor whose variance is the market weight.
    ScalarX,
    /// Nothing; the market weight must be zero.
    None,
    /// Covariance of the coarsest groups followed by the style factors. It
    /// replaces the coarsest-level and market terms, whose weights are then
    /// ignored.
    ExplicitFcm(DMatrix<f64>),
}

/// A correlation model over a classification tree, as read from a model file.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub weights: AnsatzWeights,
    pub terminal: ModelTerminal,
    /// `N × U` style loadings in tree stock order. Requires an explicit
    /// terminal covariance covering the style factors.
    pub style_loadings: Option<DMatrix<f64>>,
}

impl ModelSpec {
    /// The heuristic model: every term carries its fixed weight.
    pub fn heuristic(weights: AnsatzWeights) -> Self {
        Self {
            weights,
            terminal: ModelTerminal::ScalarX,
            style_loadings: None,
        }
    }

    pub fn validate(&self, tree: &ClassificationTree) -> Result<(), RiskModelError> {
        let depth = tree.depth();
        match &self.terminal {
            ModelTerminal::ScalarX | ModelTerminal::None => self.weights.validate(depth)?,
            ModelTerminal::ExplicitFcm(_) => self.weights.validate_count(depth)?,
        }
        if self.terminal == ModelTerminal::None && self.weights.market != 0.0 {
            return Err(RiskModelError::DimensionMismatch(format!(
                "terminal 'none' needs a zero market weight, got {}",
                self.weights.market
            )));
        }
        let u = self.style_loadings.as_ref().map_or(0, DMatrix::ncols);
        if let Some(style) = &self.style_loadings {
            if style.nrows() != tree.n_stocks() {
                return Err(RiskModelError::DimensionMismatch(format!(
                    "style loadings have {} rows for {} stocks",
                    style.nrows(),
                    tree.n_stocks()
                )));
            }
        }
        match &self.terminal {
            ModelTerminal::ExplicitFcm(fcm) => {
                let k = tree.cardinalities()[depth - 1] + u;
                if fcm.nrows() != k || fcm.ncols() != k {
                    return Err(RiskModelError::DimensionMismatch(format!(
                        "terminal covariance is {}x{}, expected {k}x{k}",
                        fcm.nrows(),
                        fcm.ncols()
                    )));
                }
            }
            _ if u > 0 => {
                return Err(RiskModelError::DimensionMismatch(
                    "style loadings need an explicit terminal covariance".into(),
                ))
            }
            _ => {}
        }
        Ok(())
    }

    /// The model over `stocks` (indices into `tree`), flattened.
    pub fn build(
        &self,
        tree: &ClassificationTree,
        stocks: &[usize],
    ) -> Result<FlatFactorModel, RiskModelError> {
        if self.terminal != ModelTerminal::ScalarX && self.terminal != ModelTerminal::None {
            return Ok(self.build_nested(tree, stocks)?.flatten());
        }
        self.validate(tree)?;
        Ok(heuristic_correlation_model(&tree.restrict(stocks), &self.weights)?.flatten())
    }

    /// The model over `stocks` in nested form.
    pub fn build_nested(
        &self,
        tree: &ClassificationTree,
        stocks: &[usize],
    ) -> Result<NestedRiskModel, RiskModelError> {
        self.validate(tree)?;
        let (sub, groups) = tree.restrict_with_groups(stocks);
        let ModelTerminal::ExplicitFcm(fcm) = &self.terminal else {
            return Ok(heuristic_correlation_model(&sub, &self.weights)?.to_nested());
        };
        let depth = sub.depth();
        let cards = sub.cardinalities();
        let coarsest = &groups[depth - 1];
        let l_full = tree.cardinalities()[depth - 1];
        let u = fcm.nrows() - l_full;
        let keep: Vec<usize> = coarsest.iter().copied().chain(l_full..l_full + u).collect();
        let terminal = fcm.select_rows(&keep).select_columns(&keep);
        let style = match &self.style_loadings {
            Some(s) => s.select_rows(stocks),
            None => DMatrix::zeros(stocks.len(), 0),
        };
        let specific = DVector::from_element(stocks.len(), self.weights.specific);
        let group_variances: Vec<DVector<f64>> = (0..depth - 1)
            .map(|l| DVector::from_element(cards[l], self.weights.levels[l]))
            .collect();
        extend_with_style(&sub, &style, terminal, &specific, &group_variances)
    }
}
