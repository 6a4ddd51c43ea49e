//! Estimation core for detecting ex-post moral hazard among remote workers.
//!
//! Multiple imputation of survey data, maximum-likelihood factor analysis of
//! productivity components, and a two-stage residual-inclusion estimate of
//! the moral-hazard coefficient δ. Synthetic generators with known truth are
//! included so every estimator can be checked against its own oracle.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![allow(unused_imports)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod dataset;
pub mod error;
pub mod factor;
pub mod imputation;
pub mod linalg;
pub mod moral_hazard;
pub mod regression;
pub mod rng;
pub mod runner;
pub mod special;
pub mod synthetic;

pub use dataset::{Dataset, DesignMatrix, Policy, Role, Schema, VariableKind, VariableSpec};
pub use error::{Error, ErrorClass, Result};
pub use regression::{fit_ols, predict, stars, RegressionFit};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
