//! Markov-switching Gaussian and Student-t models for multi-asset returns,
//! with analytic tail-risk measures on the predictive mixture and exact
//! Shapley attribution of systemic risk.
//!
//! The lower-tail convention is used throughout: `VaR_tau` satisfies
//! `P(Y <= VaR_tau) = tau`, so loss quantiles are negative numbers.

// `!(x > 0.0)` is the NaN-rejecting form used for argument checks; index
// loops follow the formulas
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod dist;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod predictive;
mod quad;
pub mod risk;
mod serde_util;
pub mod shapley;
pub mod sim;

pub use error::{Error, Result};
pub use model::{
    Component, ConditioningSpec, FittedModel, MixtureDistribution, ModelFamily, MsmParams,
    ReturnPanel, Violation,
};
