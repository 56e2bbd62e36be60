// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod error;
pub mod lattice;
pub mod monte_carlo;
pub mod path_loss;
pub mod rays;
pub mod special;

pub use error::{Error, Result};
