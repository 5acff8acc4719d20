//! N-step transition folding and proportional prioritized replay.

mod nstep;
mod sumtree;

pub use nstep::*;
pub use sumtree::*;

/// Linear importance-sampling exponent schedule from `start` to 1 over `span` steps.
pub fn beta_at(start: f64, step: u64, span: u64) -> f64 {
    if span == 0 {
        return 1.0;
    }
    (start + (1.0 - start) * step as f64 / span as f64).min(1.0)
}
