#![allow(dead_code)]

use std::path::Path;

use scanlab_core::{Fixation, Observation};

/// Writes `n` small RGB test images named `img<i>.png` and returns their ids.
pub fn write_images(dir: &Path, n: usize, w: u32, h: u32) -> Vec<String> {
    std::fs::create_dir_all(dir).unwrap();
    (0..n)
        .map(|i| {
            let img = image::RgbImage::from_fn(w, h, |x, y| {
                let v = ((x * 7 + y * 3 + i as u32 * 41) % 256) as u8;
                image::Rgb([v, 255 - v, (x * y % 256) as u8])
            });
            let id = format!("img{i}");
            img.save(dir.join(format!("{id}.png"))).unwrap();
            id
        })
        .collect()
}

/// One observation per (image, session) with a few clicks and a caption.
pub fn observations(ids: &[String], sessions: usize, w: f64, h: f64) -> Vec<Observation> {
    let mut out = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        for s in 0..sessions {
            let clicks = (0..(3 + (i + s) % 8))
                .map(|c| {
                    let t = (c + s + i) as f64;
                    Fixation::at_time((t * 13.7) % w, (t * 7.3 + 5.0) % h, 250.0 * c as f64)
                })
                .collect();
            out.push(Observation {
                session_id: format!("session{s}"),
                image_id: id.clone(),
                clicks,
                caption: format!("patch:{},{}", (i + s) % 8, (2 * i + s) % 8),
                skipped: false,
            });
        }
    }
    out
}
