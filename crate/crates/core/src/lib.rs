//! Visual predictive checks for time-to-event models whose simulations
//! cannot run past each subject's observed end of follow-up.
//!
//! The building blocks are survival primitives ([`survmodel`]), Kaplan-Meier
//! estimators with inverse-probability-of-censoring weights ([`estimators`]),
//! a Cox proportional-hazards fitter ([`coxph`]), the replicate simulators and
//! band aggregation ([`vpc`]), a synthetic study generator ([`studygen`]) and
//! the command-line layer ([`cli`]).

// negated comparisons below are how NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod coxph;
pub mod error;
pub mod estimators;
pub mod kv;
pub mod studygen;
pub mod survmodel;
pub mod vpc;

pub use error::{Error, Result};
