// `!(x > 0.0)` style checks are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod loss;
pub mod nn;
pub mod physics;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
