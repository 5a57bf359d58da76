//! Boulevard boosting for regression.
//!
//! Boulevard averages its trees instead of summing them: after `b` rounds the
//! ensemble is `(lambda / b) * sum(t_j)`, each tree is fit to the current
//! residuals on a random subsample, and the final prediction is rescaled by
//! `(1 + lambda) / lambda`. When tree structures are chosen independently of
//! the responses the fitted values converge to a kernel ridge regression
//! fixed point built from the random forest kernel, which [`kernel`]
//! computes directly.
//!
//! Modules:
//! - [`trees`]: structures, subsamples and honest leaf values
//! - [`kernel`]: structure matrices, kernel estimates and the ridge fixed point
//! - [`boosting`]: Boulevard, tail-snapshot Boulevard and baseline ensembles
//! - [`inference`]: normality checks and reproduction intervals
//! - [`contraction`]: simulation of stochastic contraction processes
//! - [`data`]: simulated generators, CSV input and fold assignment

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boosting;
pub mod contraction;
pub mod data;
pub mod error;
pub mod inference;
pub mod kernel;
pub mod seed;
pub mod trees;

pub use boosting::{
    BaselineKind, BaselineModel, BoulevardConfig, BoulevardModel, StructureMode, TraceEntry,
};
pub use error::{Error, Result};
pub use kernel::{FixedPoint, KernelEstimate, KrrSolver};
pub use trees::{
    Cell, FittedTree, StructureConstraints, StructureVector, Subsample, TreeStructure,
};
