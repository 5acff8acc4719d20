//! Fixed 16-entry palette. Each semantic category owns its own indices.

pub const WATER: u8 = 0;
pub const WATER_DARK: u8 = 1;
pub const LAND: u8 = 2;
pub const HUD_BG: u8 = 3;
pub const FLOE_WHITE: u8 = 4;
pub const FLOE_BLUE: u8 = 5;
pub const IGLOO: u8 = 6;
pub const AGENT: u8 = 7;
pub const CRAB: u8 = 8;
pub const BIRD: u8 = 9;
pub const BEAR: u8 = 10;
pub const FISH: u8 = 11;
/// Reserved for injected novel sprites; never drawn by the game itself.
pub const ALIEN: u8 = 12;

pub const PALETTE_SIZE: usize = 16;

pub const RGB: [[u8; 3]; PALETTE_SIZE] = [
    [30, 80, 180],
    [8, 16, 48],
    [170, 120, 70],
    [0, 0, 0],
    [240, 240, 240],
    [90, 150, 255],
    [200, 210, 230],
    [255, 170, 140],
    [230, 70, 20],
    [250, 230, 50],
    [255, 250, 235],
    [40, 230, 90],
    [200, 60, 220],
    [0, 0, 0],
    [0, 0, 0],
    [0, 0, 0],
];

/// Rec. 601 luma of `RGB[index]`, rounded to an integer in `0..=255`.
pub const fn luminance(index: u8) -> u8 {
    let [r, g, b] = RGB[index as usize];
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

pub fn rgb(index: u8) -> [u8; 3] {
    RGB[index as usize]
}
