//! Simultaneous estimation of the quadrature state and a fluctuating pump power
//! of an optical parametric oscillator under continuous homodyne detection.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod filters;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod sde;

pub use error::{Error, Result};
