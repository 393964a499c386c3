// `!(x > 0.0)` is used deliberately throughout so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod env;
pub mod error;
pub mod harness;
pub mod heightfield;
pub mod nn;
pub mod ppo;
pub mod reward;
pub mod sim;
pub mod vehicle;

pub use error::{Error, Result};
