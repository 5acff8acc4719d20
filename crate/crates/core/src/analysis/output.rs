use crate::env::pnm::encode_ppm;

use super::EmbeddingResult;

/// Diverging blue-white-red colour for a value in roughly `[-2, 2]`.
fn diverging(v: f64) -> [u8; 3] {
    let t = (v / 2.0).clamp(-1.0, 1.0);
    let fade = |k: f64| (255.0 * (1.0 - k)).round() as u8;
    if t < 0.0 {
        [fade(-t), fade(-t), 255]
    } else {
        [255, fade(t), fade(t)]
    }
}

/// Scatter plot of an embedding as a binary PPM; each point is a 3x3 dot coloured by its value.
pub fn embedding_ppm(e: &EmbeddingResult, side: usize) -> Vec<u8> {
    let mut rgb = vec![40u8; side * side * 3];
    if e.coords.is_empty() {
        return encode_ppm(side, side, &rgb);
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &e.coords {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let margin = 4.0;
    let span = (side as f64 - 2.0 * margin).max(1.0);
    for (p, &v) in e.coords.iter().zip(&e.values) {
        let px = |k: usize| margin + span * (p[k] - lo[k]) / (hi[k] - lo[k]).max(1e-12);
        let (cx, cy) = (px(0).round() as i64, px(1).round() as i64);
        let c = diverging(v);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (x, y) = (cx + dx, cy + dy);
                if (0..side as i64).contains(&x) && (0..side as i64).contains(&y) {
                    let i = (y as usize * side + x as usize) * 3;
                    rgb[i..i + 3].copy_from_slice(&c);
                }
            }
        }
    }
    encode_ppm(side, side, &rgb)
}

/// `x,y,value` rows.
pub fn embedding_csv(e: &EmbeddingResult) -> String {
    let mut s = String::from("x,y,value\n");
    for (p, v) in e.coords.iter().zip(&e.values) {
        s.push_str(&format!("{},{},{}\n", p[0], p[1], v));
    }
    s
}
