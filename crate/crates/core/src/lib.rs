//! Distributional Q-learning with semantic object-mask inputs on a small Frostbite-like game.
//!
//! The numerical code is generic over [`Real`]; the agent itself runs in `f32`, exposed through
//! the aliases below.

pub mod agent;
pub mod analysis;
pub mod checkpoint;
pub mod env;
pub mod error;
pub mod masks;
pub mod numcore;
pub mod replay;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Real;

/// Single-precision tensor used by the agent network.
pub type Tensor32 = numcore::Tensor<f32>;
pub type Tensor64 = numcore::Tensor<f64>;
pub type ParamStore32 = numcore::ParamStore<f32>;
pub type Graph32 = numcore::Graph<f32>;
