//! MiniFrostbite: a deterministic Frostbite-like game with pixel rendering and
//! ground-truth object annotation.
//!
//! Layout of the `64x64` screen: a status strip (rows 0-3), the shore (rows 4-11) with the igloo
//! in the top-right corner, then four bands of water each holding a lane where the agent and
//! animals move and a row of drifting ice floes beneath it.

mod config;
pub mod palette;
pub mod pnm;
mod render;
mod state;

pub use config::EnvConfig;
pub use render::{
    downscale_luminance, downscale_mask, kind_channel, luminance_sums, render, sprite_color, true_masks, Frame, REDUCED,
};
pub use state::*;

pub const WIDTH: usize = 64;
pub const HEIGHT: usize = 64;
