//! Monte Carlo evaluation of time-dependent Schrödinger evolutions through
//! complex-scaled Brownian motion.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod assumptions;
pub mod error;
pub mod numerics;
pub mod oracles;
pub mod paths;
pub mod potentials;
pub mod propagator;
pub mod states;
pub mod testfunctions;
pub mod ufunctional;
pub mod validation;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use numerics::{Complex64, McEstimate};
