//! Small differentiable network library and the actor-critic policy.

mod adam;
pub mod checkpoint;
pub mod gaussian;
pub mod layers;
mod model;
mod scalar;

pub use adam::{clip_grad_norm, Adam, AdamConfig};
pub use layers::{Conv2d, Dense, Tensor};
pub use model::{ActorCritic, Architecture, Output, ParamGroup, MAP_COLS, MAP_ROWS, PROPRIO_DIM};
pub use scalar::Scalar;

/// Parameter count of the default architecture.
pub const DEFAULT_PARAM_COUNT: usize = 917_149;
