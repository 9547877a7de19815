//! Conditional Shapley value explanations for tabular predictive models.
//!
//! The contribution function `v(S) = E[f(x) | x_S = x*_S]` is estimated by
//! interchangeable strategies (Monte Carlo samplers and regression fits)
//! registered by name in [`estimators::EstimatorRegistry`]. Exact Shapley
//! aggregation over all `2^M` coalitions lives in [`engine`], and
//! [`evaluation`] measures how precise the explanations are per instance.

pub mod coalition;
pub mod config;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod experiment;
pub mod linalg;
pub mod model;
pub mod plots;
pub mod rng;
pub mod simdata;

pub use error::{Error, Result};
