use crate::masks::{Channel, MaskSet};

use super::palette;
use super::state::*;
use super::{HEIGHT, WIDTH};

/// Palette-indexed `64x64` image.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Frame {
    pixels: Vec<u8>,
}

impl Frame {
    pub fn from_pixels(pixels: Vec<u8>) -> Option<Self> {
        (pixels.len() == WIDTH * HEIGHT && pixels.iter().all(|&p| (p as usize) < palette::PALETTE_SIZE))
            .then_some(Self { pixels })
    }

    pub fn filled(index: u8) -> Self {
        Self {
            pixels: vec![index; WIDTH * HEIGHT],
        }
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * WIDTH + x]
    }

    pub fn set(&mut self, x: usize, y: usize, index: u8) {
        self.pixels[y * WIDTH + x] = index;
    }

    pub fn luminance(&self, x: usize, y: usize) -> u8 {
        palette::luminance(self.get(x, y))
    }
}

/// 4x4 sprite bitmaps, one nibble per row, most significant bit leftmost.
fn bitmap(sprite: Option<Sprite>) -> [u8; 4] {
    match sprite {
        None => [0b0110, 0b1111, 0b0110, 0b1001],
        Some(Sprite::Crab) => [0b1001, 0b0110, 0b1111, 0b1001],
        Some(Sprite::Bird) => [0b1001, 0b1111, 0b0110, 0b0110],
        Some(Sprite::Fish) => [0b0100, 0b1110, 0b1111, 0b0100],
        Some(Sprite::Bear) => [0b1100, 0b1111, 0b1111, 0b1001],
        Some(Sprite::Alien) => [0b1001, 0b0110, 0b1111, 0b1010],
    }
}

pub fn sprite_color(sprite: Sprite) -> u8 {
    match sprite {
        Sprite::Crab => palette::CRAB,
        Sprite::Bird => palette::BIRD,
        Sprite::Fish => palette::FISH,
        Sprite::Bear => palette::BEAR,
        Sprite::Alien => palette::ALIEN,
    }
}

pub fn kind_channel(kind: AnimalKind) -> Channel {
    match kind {
        AnimalKind::Bad => Channel::BadAnimals,
        AnimalKind::Good => Channel::GoodAnimals,
        AnimalKind::Bear => Channel::Bear,
    }
}

const NO_LABEL: u8 = u8::MAX;

/// Painter's-order rasterisation producing both the colour image and the semantic label of every
/// pixel, so that occlusion is identical in frames and ground-truth masks.
struct Canvas {
    color: Vec<u8>,
    label: Vec<u8>,
}

impl Canvas {
    fn new(bg: u8) -> Self {
        Self {
            color: vec![bg; WIDTH * HEIGHT],
            label: vec![NO_LABEL; WIDTH * HEIGHT],
        }
    }

    fn put(&mut self, x: i32, y: i32, color: u8, label: Option<Channel>) {
        if (0..WIDTH as i32).contains(&x) && (0..HEIGHT as i32).contains(&y) {
            let i = y as usize * WIDTH + x as usize;
            self.color[i] = color;
            self.label[i] = label.map_or(NO_LABEL, |c| c as u8);
        }
    }

    fn rect(&mut self, x: i32, y: i32, w: i32, h: i32, color: u8, label: Option<Channel>) {
        for yy in y..y + h {
            for xx in x..x + w {
                self.put(xx, yy, color, label);
            }
        }
    }

    fn sprite(&mut self, x: i32, y: i32, bits: [u8; 4], color: u8, label: Channel) {
        for (dy, row) in bits.iter().enumerate() {
            for dx in 0..4 {
                if row & (0b1000 >> dx) != 0 {
                    self.put(x + dx, y + dy as i32, color, Some(label));
                }
            }
        }
    }
}

fn paint(s: &GameState) -> Canvas {
    let bg = if s.is_dark() {
        palette::WATER_DARK
    } else {
        palette::WATER
    };
    let mut c = Canvas::new(bg);
    c.rect(0, 0, WIDTH as i32, HUD_ROWS, palette::HUD_BG, None);
    for i in 0..s.lives as i32 {
        c.rect(1 + 4 * i, 1, 2, 2, palette::AGENT, None);
    }
    let score = s.score.min(0xffff);
    for bit in 0..16 {
        if score >> (15 - bit) & 1 == 1 {
            c.rect(30 + 2 * bit, 1, 2, 2, palette::FLOE_WHITE, None);
        }
    }
    c.rect(
        0,
        LAND_TOP,
        WIDTH as i32,
        WATER_TOP - LAND_TOP,
        palette::LAND,
        Some(Channel::Land),
    );
    for (r, row) in s.floe_rows.iter().enumerate() {
        for seg in &row.segments {
            let (color, label) = if seg.visited {
                (palette::FLOE_BLUE, Channel::VisitedFloes)
            } else {
                (palette::FLOE_WHITE, Channel::UnvisitedFloes)
            };
            for (px, pw) in seg.pieces(s.frame) {
                for dx in 0..pw {
                    let x = (px + dx).rem_euclid(WIDTH as i32);
                    c.rect(x, floe_y(r), 1, FLOE_THICKNESS, color, Some(label));
                }
            }
        }
    }
    for i in 0..s.igloo_pieces.min(IGLOO_PIECES) as i32 {
        let (col, tier) = (i % 4, i / 4);
        c.rect(
            IGLOO_X + 3 * col,
            IGLOO_Y + 2 * (1 - tier),
            3,
            2,
            palette::IGLOO,
            Some(Channel::Igloo),
        );
    }
    for a in &s.animals {
        c.sprite(
            a.x,
            a.y,
            bitmap(Some(a.sprite)),
            sprite_color(a.sprite),
            kind_channel(a.kind),
        );
    }
    let ag = &s.agent;
    c.sprite(ag.x, ag.y(), bitmap(None), palette::AGENT, Channel::Agent);
    c
}

/// Draws the state. Pure: equal states give equal frames.
pub fn render(s: &GameState) -> Frame {
    Frame { pixels: paint(s).color }
}

/// Ground-truth masks taken from entity geometry (with the same occlusion as [`render`]).
pub fn true_masks(s: &GameState) -> MaskSet {
    let canvas = paint(s);
    let mut m = MaskSet::empty(WIDTH);
    for (i, &l) in canvas.label.iter().enumerate() {
        if l != NO_LABEL {
            m.plane_mut(Channel::ALL[l as usize])[i] = 1;
        }
    }
    m
}

/// Side of the reduced grids.
pub const REDUCED: usize = WIDTH / 2;

/// 2x2 mean of palette luminances scaled to `[0, 1]`; returns a `32x32` row-major grid.
pub fn downscale_luminance(frame: &Frame) -> Vec<f32> {
    luminance_sums(frame).into_iter().map(|s| s as f32 / 1020.0).collect()
}

/// Sums of the four 8-bit luminances under each reduced cell (`0..=1020`).
pub fn luminance_sums(frame: &Frame) -> Vec<u16> {
    let mut out = vec![0u16; REDUCED * REDUCED];
    for y in 0..HEIGHT {
        for x in 0..WIDTH {
            out[(y / 2) * REDUCED + x / 2] += frame.luminance(x, y) as u16;
        }
    }
    out
}

/// 2x2 max-pool of a binary `64x64` grid to `32x32`.
pub fn downscale_mask(mask: &[u8]) -> Vec<u8> {
    assert_eq!(mask.len(), WIDTH * HEIGHT, "mask must be full resolution");
    let mut out = vec![0u8; REDUCED * REDUCED];
    for y in 0..HEIGHT {
        for x in 0..WIDTH {
            if mask[y * WIDTH + x] != 0 {
                out[(y / 2) * REDUCED + x / 2] = 1;
            }
        }
    }
    out
}
