//! Two-component energy balance model estimated as a linear Gaussian
//! state-space system.
//!
//! Modules, bottom-up: [`ssm`] (filter, smoother, simulator), [`model`]
//! (parameters and system matrices), [`estimation`] (maximum likelihood and
//! standard errors), [`simulation`] (Monte Carlo recovery study), [`data`]
//! (series alignment and panel assembly), [`diagnostics`] (unit-root and
//! residual tests) and [`projection`] (scenario fans).

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod estimation;
pub mod model;
pub mod projection;
pub mod simulation;
pub mod ssm;

pub use error::{Error, Result};
