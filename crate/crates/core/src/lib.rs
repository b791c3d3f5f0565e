//! Calculators and Monte Carlo validators for reliability, adaptation,
//! grounding and trust limits of LLM-based systems.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adaptation;
pub mod catalogue;
pub mod chain;
pub mod compose;
pub mod error;
pub mod grounding;
pub mod horizon;
pub mod prob;
pub mod report;
pub mod seed;
pub mod stats;
pub mod trust;

pub use error::{Error, Result};
pub use prob::{Probability, Seed};
pub use report::{CostUnits, Rule, SimReport, SpecVerdict};
pub use seed::derive_trial_seed;
pub use stats::{binom_tail, wilson_interval};
