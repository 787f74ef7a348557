use image::{Rgba, RgbaImage};
use scanlab_core::Stimulus;

/// Support radius of a reveal, in units of its sigma.
pub const REVEAL_TRUNCATE: f64 = 3.0;

/// A rectangular RGBA cutout and its top-left corner in image pixels.
pub struct Patch {
    pub origin: (u32, u32),
    pub image: RgbaImage,
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Clean pixels around `(x, y)` with alpha `G(p) = exp(-|p - c|^2 / 2 sigma^2)`,
/// cut to the disk of radius `3 sigma`.
///
/// Pixels whose alpha rounds to zero carry the coarse color, so the patch
/// holds no clean information outside its visible support.
pub fn reveal_patch(clean: &Stimulus, coarse: &Stimulus, x: f64, y: f64, sigma: f64) -> Patch {
    let (w, h) = clean.dimensions();
    let r = REVEAL_TRUNCATE * sigma;
    let x0 = (x - r).floor().max(0.0) as usize;
    let y0 = (y - r).floor().max(0.0) as usize;
    let x1 = ((x + r).ceil() as usize).min(w - 1);
    let y1 = ((y + r).ceil() as usize).min(h - 1);
    let mut image = RgbaImage::new((x1 - x0 + 1) as u32, (y1 - y0 + 1) as u32);
    for py in y0..=y1 {
        for px in x0..=x1 {
            let d2 = (px as f64 - x).powi(2) + (py as f64 - y).powi(2);
            let alpha = if d2 <= r * r {
                to_u8((-d2 / (2.0 * sigma * sigma)).exp())
            } else {
                0
            };
            let src = if alpha > 0 {
                clean.pixel(px, py)
            } else {
                coarse.pixel(px, py)
            };
            image.put_pixel(
                (px - x0) as u32,
                (py - y0) as u32,
                Rgba([to_u8(src[0]), to_u8(src[1]), to_u8(src[2]), alpha]),
            );
        }
    }
    Patch {
        origin: (x0 as u32, y0 as u32),
        image,
    }
}
