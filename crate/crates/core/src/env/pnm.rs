//! Binary PGM (`P5`) and PPM (`P6`) encoding for frames, masks and plots.

use crate::error::{Error, Result};

use super::{palette, Frame, HEIGHT, WIDTH};

pub fn encode_pgm(width: usize, height: usize, gray: &[u8]) -> Vec<u8> {
    assert_eq!(gray.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(gray);
    out
}

pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    assert_eq!(rgb.len(), width * height * 3);
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

/// Colour frame as PPM.
pub fn frame_ppm(frame: &Frame) -> Vec<u8> {
    let rgb: Vec<u8> = frame.pixels().iter().flat_map(|&p| palette::rgb(p)).collect();
    encode_ppm(WIDTH, HEIGHT, &rgb)
}

/// Frame luminance as PGM.
pub fn frame_pgm(frame: &Frame) -> Vec<u8> {
    let g: Vec<u8> = frame.pixels().iter().map(|&p| palette::luminance(p)).collect();
    encode_pgm(WIDTH, HEIGHT, &g)
}

/// Binary mask as PGM, set pixels white.
pub fn mask_pgm(side: usize, mask: &[u8]) -> Vec<u8> {
    let g: Vec<u8> = mask.iter().map(|&m| if m != 0 { 255 } else { 0 }).collect();
    encode_pgm(side, side, &g)
}

/// Parsed binary PNM image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pnm {
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

/// Decodes the `P5`/`P6` files written by this module (no comments, maxval 255).
pub fn decode(bytes: &[u8]) -> Result<Pnm> {
    let bad = |m: &str| Error::Invalid(format!("pnm: {m}"));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?);
    }
    pos += 1;
    let channels = match fields[0] {
        "P5" => 1,
        "P6" => 3,
        m => return Err(bad(&format!("unsupported magic {m}"))),
    };
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("dimension"));
    let (width, height) = (num(fields[1])?, num(fields[2])?);
    if fields[3] != "255" {
        return Err(bad("maxval must be 255"));
    }
    let data = bytes.get(pos..).ok_or_else(|| bad("truncated"))?.to_vec();
    if data.len() != width * height * channels {
        return Err(bad("payload length"));
    }
    Ok(Pnm {
        channels,
        width,
        height,
        data,
    })
}
