use crate::error::{Error, Result};

/// Tunables of the game. Defaults give the standard desk-scale game.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    /// Env-frames per level (and per life) before the agent freezes.
    pub timer_frames: u32,
    pub lives: u8,
    pub floes_per_row: usize,
    pub floe_width: i32,
    /// Per-frame probability that an animal enters the play area.
    pub spawn_rate: f64,
    /// Fraction of spawned animals that are edible fish.
    pub fish_fraction: f64,
    pub max_animals: usize,
    /// First level drawn on the dark background; the bear also appears from here on.
    pub dark_level: u32,
    /// First level with split floes.
    pub split_level: u32,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            timer_frames: 3000,
            lives: 3,
            floes_per_row: 3,
            floe_width: 12,
            spawn_rate: 1.0 / 60.0,
            fish_fraction: 0.35,
            max_animals: 6,
            dark_level: 3,
            split_level: 4,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| {
            Err(Error::Config {
                field: field.into(),
                reason: reason.into(),
            })
        };
        if self.timer_frames < 4 {
            return bad("timer_frames", "must be at least one agent step (4 frames)");
        }
        if !(1..=3).contains(&self.lives) {
            return bad("lives", "must be in 1..=3");
        }
        if self.floes_per_row == 0 || self.floes_per_row > 4 {
            return bad("floes_per_row", "must be in 1..=4");
        }
        let span = super::WIDTH as i32 / self.floes_per_row as i32;
        if self.floe_width < 6 || self.floe_width + 2 > span {
            return bad("floe_width", "must be at least 6 and leave a gap between floes");
        }
        if !(0.0..=1.0).contains(&self.spawn_rate) {
            return bad("spawn_rate", "must be a probability");
        }
        if !(0.0..=1.0).contains(&self.fish_fraction) {
            return bad("fish_fraction", "must be a probability");
        }
        if self.dark_level == 0 || self.split_level == 0 {
            return bad("dark_level", "levels start at 1");
        }
        Ok(())
    }
}
