use std::path::Path;

use scanlab_core::{foveation, Stimulus};

use crate::error::{CollectError, Result};

/// One stimulus with its blurred rendition, encoded once at startup.
pub struct PoolImage {
    pub clean: Stimulus,
    pub coarse: Stimulus,
    pub blurred_png: Vec<u8>,
}

/// All images available for presentation, sorted by id.
pub struct ImagePool {
    images: Vec<PoolImage>,
}

pub(crate) fn encode_png(img: &image::DynamicImage) -> Result<Vec<u8>> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)?;
    Ok(buf.into_inner())
}

impl ImagePool {
    pub fn new(stimuli: Vec<Stimulus>, blur_sigma: f64) -> Result<Self> {
        let mut images = stimuli
            .into_iter()
            .map(|clean| {
                let coarse = foveation::coarse(&clean, blur_sigma)?;
                let blurred_png = encode_png(&image::DynamicImage::ImageRgb8(coarse.to_rgb8()))?;
                Ok(PoolImage {
                    clean,
                    coarse,
                    blurred_png,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        images.sort_by(|a, b| a.clean.image_id.cmp(&b.clean.image_id));
        Ok(Self { images })
    }

    /// Loads every PNG or JPEG in `dir`; the file name is the image id.
    pub fn load_dir(dir: &Path, blur_sigma: f64) -> Result<Self> {
        let mut stimuli = Vec::new();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            let is_image = path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"));
            if !is_image {
                continue;
            }
            let id = path
                .file_name()
                .and_then(|n| n.to_str())
                .ok_or_else(|| CollectError::Config(format!("non UTF-8 file name {}", path.display())))?
                .to_string();
            stimuli.push(Stimulus::load(&path, id)?);
        }
        Self::new(stimuli, blur_sigma)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn get(&self, index: usize) -> &PoolImage {
        &self.images[index]
    }
}
