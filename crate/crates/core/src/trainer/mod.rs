//! Training and evaluation protocol: acting, replay, learning, target sync, evaluation points and
//! metrics in human-hour units.

mod config;
mod eval;
mod run;

pub use config::*;
pub use eval::*;
pub use run::*;
