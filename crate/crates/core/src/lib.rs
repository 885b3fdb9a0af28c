//! Distributed inexact Newton method for network utility maximization.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod auxgraph;
pub mod baselines;
pub mod diagnostics;
pub mod direction;
pub mod dual;
pub mod errctl;
pub mod error;
pub mod experiment;
pub mod gen;
pub mod kkt;
pub mod metrics;
pub mod model;
pub mod solver;
pub mod spectral;
pub mod trace;

pub use error::{Error, Result};
