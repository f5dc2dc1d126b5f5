//! Attack/defense zero-sum game on synthetic distributions: exact best
//! responses, equilibrium and randomization verifiers, gradient attacks and
//! boosted adversarial training of small networks.

// `!(a > b)` is how validation rejects NaN alongside out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attacks;
pub mod cli;
pub mod distributions;
pub mod error;
pub mod game;
pub mod hypotheses;
pub mod norm;
pub(crate) mod serde_ext;
pub mod training;

pub use error::{Error, Result};
