use image::{Rgb, RgbImage};

use crate::model::{Scanpath, Stimulus};

/// Ten well separated colors.
pub const DEFAULT_PALETTE: [[u8; 3]; 10] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
];

#[derive(Debug, Clone, PartialEq)]
pub struct OverlayStyle {
    pub palette: Vec<[u8; 3]>,
    pub marker_radius: u32,
    pub line_width: u32,
    pub label_color: [u8; 3],
}

impl Default for OverlayStyle {
    fn default() -> Self {
        Self {
            palette: DEFAULT_PALETTE.to_vec(),
            marker_radius: 9,
            line_width: 2,
            label_color: [255, 255, 255],
        }
    }
}

// 3x5 digits, one row per entry, high bit on the left.
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

fn put(img: &mut RgbImage, x: i64, y: i64, c: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, Rgb(c));
    }
}

fn disk(img: &mut RgbImage, cx: f64, cy: f64, r: f64, c: [u8; 3]) {
    let r2 = r * r;
    for y in (cy - r).floor() as i64..=(cy + r).ceil() as i64 {
        for x in (cx - r).floor() as i64..=(cx + r).ceil() as i64 {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            if dx * dx + dy * dy <= r2 {
                put(img, x, y, c);
            }
        }
    }
}

fn line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), width: u32, c: [u8; 3]) {
    let len = (b.0 - a.0).hypot(b.1 - a.1);
    let n = len.ceil().max(1.0) as usize;
    let r = f64::from(width.max(1)) / 2.0;
    for i in 0..=n {
        let t = i as f64 / n as f64;
        disk(img, a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1), r, c);
    }
}

fn label(img: &mut RgbImage, cx: f64, cy: f64, number: usize, scale: u32, c: [u8; 3]) {
    let text = number.to_string();
    let s = i64::from(scale);
    let glyph_w = 3 * s;
    let total_w = text.len() as i64 * (glyph_w + s) - s;
    let x0 = cx.round() as i64 - total_w / 2;
    let y0 = cy.round() as i64 - 5 * s / 2;
    for (i, ch) in text.bytes().enumerate() {
        let glyph = DIGITS[(ch - b'0') as usize];
        let gx = x0 + i as i64 * (glyph_w + s);
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..3 {
                if bits & (0b100 >> col) != 0 {
                    for dy in 0..s {
                        for dx in 0..s {
                            put(img, gx + col * s + dx, y0 + row as i64 * s + dy, c);
                        }
                    }
                }
            }
        }
    }
}

/// Draws each scanpath as connected, numbered markers in its palette color.
/// The output has the stimulus dimensions.
pub fn render_overlay(stimulus: &Stimulus, scanpaths: &[Scanpath], style: &OverlayStyle) -> RgbImage {
    let mut img = stimulus.to_rgb8();
    let palette = if style.palette.is_empty() {
        DEFAULT_PALETTE.to_vec()
    } else {
        style.palette.clone()
    };
    let r = f64::from(style.marker_radius.max(3));
    let scale = (style.marker_radius / 5).max(1);
    for (i, sp) in scanpaths.iter().enumerate() {
        let color = palette[i % palette.len()];
        for w in sp.fixations.windows(2) {
            line(&mut img, (w[0].x, w[0].y), (w[1].x, w[1].y), style.line_width, color);
        }
        for (n, f) in sp.fixations.iter().enumerate() {
            disk(&mut img, f.x, f.y, r, color);
            label(&mut img, f.x, f.y, n + 1, scale, style.label_color);
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Fixation, ScanpathSource};

    fn sp(points: &[(f64, f64)]) -> Scanpath {
        Scanpath::new(
            "img",
            points.iter().map(|&(x, y)| Fixation::new(x, y)).collect(),
            ScanpathSource::Simulated,
            "m",
        )
    }

    fn count(img: &RgbImage, c: [u8; 3]) -> usize {
        img.pixels().filter(|p| p.0 == c).count()
    }

    #[test]
    fn single_marker_labeled_one() {
        let s = Stimulus::filled("img", 60, 40, [0.0; 3]).unwrap();
        let style = OverlayStyle::default();
        let img = render_overlay(&s, &[sp(&[(30.0, 20.0)])], &style);
        assert_eq!(img.dimensions(), (60, 40));
        // A "1" in the 3x5 font has 8 lit cells at scale 1.
        assert_eq!(count(&img, style.label_color), 8);
        assert!(count(&img, style.palette[0]) > 200);
        // The label's vertical stroke passes through the centre.
        assert_eq!(img.get_pixel(30, 20).0, style.label_color);
    }

    #[test]
    fn two_scanpaths_two_colors() {
        let s = Stimulus::filled("img", 80, 80, [0.0; 3]).unwrap();
        let style = OverlayStyle::default();
        let img = render_overlay(&s, &[sp(&[(10.0, 10.0), (70.0, 10.0)]), sp(&[(10.0, 60.0), (70.0, 60.0)])], &style);
        assert!(count(&img, style.palette[0]) > 0);
        assert!(count(&img, style.palette[1]) > 0);
        assert_ne!(style.palette[0], style.palette[1]);
        // Connecting line drawn midway.
        assert_eq!(img.get_pixel(40, 10).0, style.palette[0]);
    }
}
