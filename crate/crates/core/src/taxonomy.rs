//! Hierarchical binary industry classifications.
//!
//! A classification is a chain of total maps, finest level first:
//! stock -> sub-industry -> industry -> sector. Each map becomes a binary
//! loadings matrix whose rows carry exactly one unit entry, and composing the
//! maps gives the stock-level loadings for the coarser groupings.
//!
//! All indices are zero-based. Three levels is the documented default but any
//! depth is accepted.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Conventional names for the levels of a three-level tree, finest first.
pub const THREE_LEVEL_NAMES: [&str; 3] = ["sub-industry", "industry", "sector"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaxonomyError {
    #[error("level {level}: entry {index} maps to group {value}, but only {groups} groups are declared")]
    OutOfRange {
        level: usize,
        index: usize,
        value: usize,
        groups: usize,
    },

    #[error("level {level}: map has {actual} entries, expected {expected} (the group count of the level below)")]
    LengthMismatch {
        level: usize,
        expected: usize,
        actual: usize,
    },

    #[error("classification tree needs at least one level")]
    NoLevels,

    #[error("tree has empty groups: {0:?}")]
    EmptyGroups(Vec<(usize, usize)>),
}

/// One step of the hierarchy: a map from the members of the level below (stocks
/// for the first level) onto `n_groups` groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelMap {
    pub parent_of: Vec<usize>,
    pub n_groups: usize,
}

impl LevelMap {
    pub fn new(parent_of: Vec<usize>, n_groups: usize) -> Self {
        Self {
            parent_of,
            n_groups,
        }
    }
}

/// A binary classification tree. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationTree {
    levels: Vec<LevelMap>,
}

/// Outcome of [`validate_tree`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    /// Declared group count per level.
    pub declared: Vec<usize>,
    /// Group count per level after dropping groups no stock reaches.
    pub effective: Vec<usize>,
    /// `(level, group)` pairs that no stock reaches.
    pub empty_groups: Vec<(usize, usize)>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.empty_groups.is_empty()
    }
}

impl ClassificationTree {
    /// Builds a tree, checking map lengths and index ranges. Empty groups are
    /// allowed here and reported by [`validate_tree`].
    pub fn from_levels(levels: Vec<LevelMap>) -> Result<Self, TaxonomyError> {
        if levels.is_empty() {
            return Err(TaxonomyError::NoLevels);
        }
        for (level, map) in levels.iter().enumerate() {
            if level > 0 {
                let expected = levels[level - 1].n_groups;
                if map.parent_of.len() != expected {
                    return Err(TaxonomyError::LengthMismatch {
                        level,
                        expected,
                        actual: map.parent_of.len(),
                    });
                }
            }
            if let Some((index, &value)) = map
                .parent_of
                .iter()
                .enumerate()
                .find(|(_, &v)| v >= map.n_groups)
            {
                return Err(TaxonomyError::OutOfRange {
                    level,
                    index,
                    value,
                    groups: map.n_groups,
                });
            }
        }
        Ok(Self { levels })
    }

    /// Three-level tree from the stock -> sub-industry, sub-industry -> industry
    /// and industry -> sector maps, with declared cardinalities.
    pub fn three_level(
        sub_industry_of: Vec<usize>,
        industry_of: Vec<usize>,
        sector_of: Vec<usize>,
        (k, f, l): (usize, usize, usize),
    ) -> Result<Self, TaxonomyError> {
        Self::from_levels(vec![
            LevelMap::new(sub_industry_of, k),
            LevelMap::new(industry_of, f),
            LevelMap::new(sector_of, l),
        ])
    }

    /// Like [`from_levels`](Self::from_levels) but also rejects empty groups.
    pub fn dense(levels: Vec<LevelMap>) -> Result<Self, TaxonomyError> {
        let tree = Self::from_levels(levels)?;
        let report = validate_tree(&tree);
        if report.is_valid() {
            Ok(tree)
        } else {
            Err(TaxonomyError::EmptyGroups(report.empty_groups))
        }
    }

    pub fn n_stocks(&self) -> usize {
        self.levels[0].parent_of.len()
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[LevelMap] {
        &self.levels
    }

    /// Group counts per level, finest first: `(K, F, L, ...)`.
    pub fn cardinalities(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.n_groups).collect()
    }

    /// Map from stocks to the groups of `level` (0 = finest), i.e. the composed
    /// map `G`, `SG`, `TSG`, ...
    pub fn stock_groups(&self, level: usize) -> Vec<usize> {
        let mut groups = self.levels[0].parent_of.clone();
        for map in &self.levels[1..=level] {
            for g in groups.iter_mut() {
                *g = map.parent_of[*g];
            }
        }
        groups
    }

    /// Stock-level binary loadings for `level` (`Ω`, `Ω̃`, `Ω̂`, ...).
    pub fn stock_loadings(&self, level: usize) -> BinaryLoadings {
        BinaryLoadings {
            cols: self.levels[level].n_groups,
            assignment: self.stock_groups(level),
        }
    }

    /// Loadings of `level` on its parent level (`Ω`, `Λ`, `Δ`, ...).
    pub fn level_loadings(&self, level: usize) -> BinaryLoadings {
        let map = &self.levels[level];
        BinaryLoadings {
            cols: map.n_groups,
            assignment: map.parent_of.clone(),
        }
    }

    /// Deepest level (0 = finest) at which two stocks share a group, or `None`
    /// when they share none.
    pub fn deepest_common_level(&self, i: usize, j: usize) -> Option<usize> {
        let (mut gi, mut gj) = (self.levels[0].parent_of[i], self.levels[0].parent_of[j]);
        for (level, map) in self.levels.iter().enumerate() {
            if level > 0 {
                gi = map.parent_of[gi];
                gj = map.parent_of[gj];
            }
            if gi == gj {
                return Some(level);
            }
        }
        None
    }

    /// Drops groups no stock reaches and relabels the survivors densely in
    /// order of their old index. Returns the new tree and, per level, the old
    /// index of every new group.
    pub fn compacted(&self) -> (Self, Vec<Vec<usize>>) {
        let mut levels = Vec::with_capacity(self.levels.len());
        let mut kept_per_level = Vec::with_capacity(self.levels.len());
        // members of the level below, expressed as old indices
        let mut members: Vec<usize> = (0..self.n_stocks()).collect();
        let mut member_new_index: Vec<usize> = members.clone();
        for map in &self.levels {
            let mut used = vec![false; map.n_groups];
            for &m in &members {
                used[map.parent_of[m]] = true;
            }
            let mut new_index = vec![usize::MAX; map.n_groups];
            let mut kept = Vec::new();
            for (old, _) in used.iter().enumerate().filter(|(_, &u)| u) {
                new_index[old] = kept.len();
                kept.push(old);
            }
            let mut parent_of = vec![0; members.len()];
            for &m in &members {
                parent_of[member_new_index[m]] = new_index[map.parent_of[m]];
            }
            levels.push(LevelMap::new(parent_of, kept.len()));
            member_new_index = new_index;
            members = kept.clone();
            kept_per_level.push(kept);
        }
        (Self { levels }, kept_per_level)
    }

    /// Restricts the tree to a subset of stocks (in the given order) and
    /// compacts away groups left empty.
    pub fn restrict(&self, stocks: &[usize]) -> Self {
        self.restrict_with_groups(stocks).0
    }

    /// [`restrict`](Self::restrict), also returning the surviving groups'
    /// original indices per level.
    pub fn restrict_with_groups(&self, stocks: &[usize]) -> (Self, Vec<Vec<usize>>) {
        let mut levels = self.levels.clone();
        levels[0].parent_of = stocks.iter().map(|&i| self.levels[0].parent_of[i]).collect();
        Self { levels }.compacted()
    }
}

/// Reports empty groups and the effective cardinalities of a tree.
pub fn validate_tree(tree: &ClassificationTree) -> ValidationReport {
    let (compact, kept) = tree.compacted();
    let mut empty_groups = Vec::new();
    for (level, map) in tree.levels.iter().enumerate() {
        let mut used = vec![false; map.n_groups];
        for &k in &kept[level] {
            used[k] = true;
        }
        empty_groups.extend(
            used.iter()
                .enumerate()
                .filter(|(_, &u)| !u)
                .map(|(g, _)| (level, g)),
        );
    }
    ValidationReport {
        declared: tree.cardinalities(),
        effective: compact.cardinalities(),
        empty_groups,
    }
}

/// A binary loadings matrix stored as its row -> column assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryLoadings {
    cols: usize,
    assignment: Vec<usize>,
}

impl BinaryLoadings {
    pub fn new(assignment: Vec<usize>, cols: usize) -> Result<Self, TaxonomyError> {
        if let Some((index, &value)) = assignment.iter().enumerate().find(|(_, &v)| v >= cols) {
            return Err(TaxonomyError::OutOfRange {
                level: 0,
                index,
                value,
                groups: cols,
            });
        }
        Ok(Self { cols, assignment })
    }

    pub fn rows(&self) -> usize {
        self.assignment.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// The composed loadings `self · next`, computed on the assignments.
    pub fn then(&self, next: &BinaryLoadings) -> Result<Self, TaxonomyError> {
        if next.rows() != self.cols {
            return Err(TaxonomyError::LengthMismatch {
                level: 1,
                expected: self.cols,
                actual: next.rows(),
            });
        }
        Ok(Self {
            cols: next.cols,
            assignment: self.assignment.iter().map(|&c| next.assignment[c]).collect(),
        })
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows(), self.cols);
        for (r, &c) in self.assignment.iter().enumerate() {
            m[(r, c)] = 1.0;
        }
        m
    }
}

/// `Ω_iA = δ_{map(i), A}`.
pub fn binary_loadings(
    map: &[usize],
    rows: usize,
    cols: usize,
) -> Result<BinaryLoadings, TaxonomyError> {
    if map.len() != rows {
        return Err(TaxonomyError::LengthMismatch {
            level: 0,
            expected: rows,
            actual: map.len(),
        });
    }
    BinaryLoadings::new(map.to_vec(), cols)
}

/// Stock -> industry and stock -> sector maps of a three-level tree.
pub fn compose(tree: &ClassificationTree) -> (Vec<usize>, Vec<usize>) {
    let industry = tree.stock_groups(1.min(tree.depth() - 1));
    let sector = tree.stock_groups(2.min(tree.depth() - 1));
    (industry, sector)
}
