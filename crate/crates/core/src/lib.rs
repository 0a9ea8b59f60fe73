//! Nested ("Russian-doll") multi-factor equity risk models.
//!
//! The crate covers the whole path from an industry classification to a
//! backtest report:
//!
//! - [`taxonomy`]: binary classification trees and their loadings matrices.
//! - [`riskmodel`]: nested factor models, their flattened equivalents, the
//!   binary closed form and the fixed-weight correlation model.
//! - [`portfolio`]: weighted cross-sectional regression, closed-form
//!   dollar-neutral Sharpe maximization, low-rank covariance inversion and the
//!   regression-based specific-risk diagnostics.
//! - [`backtest`]: overnight-return alphas traded intraday with periodic
//!   universe and weight refreshes.
//! - [`data_io`]: CSV loaders and report writers.
//! - [`synthetic`]: generators for planted-structure test data.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod data_io;
pub mod portfolio;
pub mod riskmodel;
pub mod synthetic;
pub mod taxonomy;
