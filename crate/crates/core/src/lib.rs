//! Two-layer ReLU³ physics-informed networks for Poisson's equation on the
//! unit ball, trained by SGD on the hidden weights, plus numerical checks of
//! the convergence theory.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod math;
pub mod pinn;
pub mod problem;
pub mod theory;
pub mod train;

pub use error::{Error, Result};
