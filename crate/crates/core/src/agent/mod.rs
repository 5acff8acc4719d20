//! Observation assembly, the dueling/noisy categorical Q-network and the C51 target machinery.

mod categorical;
mod network;
mod observation;

pub use categorical::*;
pub use network::*;
pub use observation::*;
