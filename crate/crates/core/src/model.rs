//! Shared domain types and coordinate conventions.
//!
//! Pixel coordinates are continuous with the origin at the top-left corner;
//! `x` grows to the right and `y` grows downwards. Normalized coordinates
//! divide by the image width and height respectively.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An RGB raster with channel values in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Stimulus {
    pub image_id: String,
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl Stimulus {
    pub fn new(
        image_id: impl Into<String>,
        width: usize,
        height: usize,
        pixels: Vec<[f64; 3]>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param(format!(
                "stimulus dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Input(format!(
                "expected {} pixels for a {width}x{height} stimulus, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels
            .iter()
            .flatten()
            .find(|c| !(0.0..=1.0).contains(*c))
        {
            return Err(Error::Input(format!(
                "channel value {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            image_id: image_id.into(),
            width,
            height,
            pixels,
        })
    }

    /// Builds a stimulus whose three channels all carry `gray`.
    pub fn from_gray(
        image_id: impl Into<String>,
        width: usize,
        height: usize,
        gray: &[f64],
    ) -> Result<Self> {
        Self::new(image_id, width, height, gray.iter().map(|&g| [g; 3]).collect())
    }

    pub fn filled(image_id: impl Into<String>, width: usize, height: usize, rgb: [f64; 3]) -> Result<Self> {
        Self::new(image_id, width, height, vec![rgb; width * height])
    }

    /// Internal constructor for buffers that already satisfy the invariants.
    pub(crate) fn from_parts_unchecked(
        image_id: String,
        width: usize,
        height: usize,
        pixels: Vec<[f64; 3]>,
    ) -> Self {
        debug_assert_eq!(pixels.len(), width * height);
        Self {
            image_id,
            width,
            height,
            pixels,
        }
    }

    pub fn load(path: &Path, image_id: impl Into<String>) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        Ok(Self::from_rgb8(image_id, &img))
    }

    pub fn from_rgb8(image_id: impl Into<String>, img: &image::RgbImage) -> Self {
        let (w, h) = img.dimensions();
        let pixels = img
            .pixels()
            .map(|p| {
                [
                    f64::from(p[0]) / 255.0,
                    f64::from(p[1]) / 255.0,
                    f64::from(p[2]) / 255.0,
                ]
            })
            .collect();
        Self::from_parts_unchecked(image_id.into(), w as usize, h as usize, pixels)
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        let mut img = image::RgbImage::new(self.width as u32, self.height as u32);
        for (dst, src) in img.pixels_mut().zip(&self.pixels) {
            for c in 0..3 {
                dst[c] = (src[c] * 255.0).round().clamp(0.0, 255.0) as u8;
            }
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    /// Per-pixel mean of the RGB channels.
    pub fn gray(&self) -> Vec<f64> {
        self.pixels
            .iter()
            .map(|p| (p[0] + p[1] + p[2]) / 3.0)
            .collect()
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut pixels = Vec::with_capacity(self.pixels.len());
        for row in self.pixels.chunks(self.width) {
            pixels.extend(row.iter().rev());
        }
        Self::from_parts_unchecked(self.image_id.clone(), self.width, self.height, pixels)
    }

    /// Bilinear resampling with pixel-center alignment.
    pub fn resample_bilinear(&self, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param("resample target must be non-empty"));
        }
        if (width, height) == (self.width, self.height) {
            return Ok(self.clone());
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let mut pixels = Vec::with_capacity(width * height);
        for oy in 0..height {
            let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let ty = fy - y0 as f64;
            for ox in 0..width {
                let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let tx = fx - x0 as f64;
                let (a, b) = (self.pixel(x0, y0), self.pixel(x1, y0));
                let (c, d) = (self.pixel(x0, y1), self.pixel(x1, y1));
                let mut out = [0.0; 3];
                for k in 0..3 {
                    let top = a[k] + (b[k] - a[k]) * tx;
                    let bottom = c[k] + (d[k] - c[k]) * tx;
                    out[k] = (top + (bottom - top) * ty).clamp(0.0, 1.0);
                }
                pixels.push(out);
            }
        }
        Ok(Self::from_parts_unchecked(self.image_id.clone(), width, height, pixels))
    }
}

/// A single attended location in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_ms: Option<f64>,
}

impl Fixation {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y, t_ms: None }
    }

    pub fn at_time(x: f64, y: f64, t_ms: f64) -> Self {
        Self {
            x,
            y,
            t_ms: Some(t_ms),
        }
    }

    pub fn in_bounds(&self, width: usize, height: usize) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.x < width as f64 && self.y < height as f64
    }

    pub fn distance(&self, other: &Fixation) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanpathSource {
    HumanClick,
    HumanEyetrack,
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scanpath {
    pub image_id: String,
    pub fixations: Vec<Fixation>,
    pub source: ScanpathSource,
    pub model_tag: String,
}

impl Scanpath {
    pub fn new(
        image_id: impl Into<String>,
        fixations: Vec<Fixation>,
        source: ScanpathSource,
        model_tag: impl Into<String>,
    ) -> Self {
        Self {
            image_id: image_id.into(),
            fixations,
            source,
            model_tag: model_tag.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.fixations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixations.is_empty()
    }

    /// Checks the length and bounds invariants against the owning image.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if self.fixations.is_empty() {
            return Err(Error::Input(format!(
                "scanpath for {} has no fixations",
                self.image_id
            )));
        }
        for f in &self.fixations {
            if !f.in_bounds(width, height) {
                return Err(Error::Bounds {
                    x: f.x,
                    y: f.y,
                    width,
                    height,
                });
            }
        }
        Ok(())
    }

    pub fn truncated(&self, max_len: usize) -> Self {
        let mut out = self.clone();
        out.fixations.truncate(max_len);
        out
    }
}

/// Maximum number of clicks a participant may spend on one image.
pub const MAX_CLICKS: usize = 10;

/// One caption and click exploration of one image by one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub session_id: String,
    pub image_id: String,
    pub clicks: Vec<Fixation>,
    pub caption: String,
    pub skipped: bool,
}

impl Observation {
    pub fn click_scanpath(&self) -> Scanpath {
        Scanpath::new(
            self.image_id.clone(),
            self.clicks.clone(),
            ScanpathSource::HumanClick,
            self.session_id.clone(),
        )
    }
}

/// Parameters of the scanpath generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineParams {
    /// Number of fixations per scanpath.
    pub n_fixations: usize,
    /// Gradient steps per fixation.
    pub steps: usize,
    /// Learning rate, in normalized coordinate units.
    pub alpha: f64,
    /// Foveation standard deviation, in pixels.
    pub sigma_xi: f64,
    /// Standard deviation of the blur that produces the coarse stimulus, in pixels.
    pub blur_sigma: f64,
    /// Forgetting factor applied to past foveation masks.
    pub gamma: f64,
    /// Finite-difference step, in normalized coordinate units.
    pub grad_step: f64,
    /// Start every fixation search at the image center instead of the previous optimum.
    pub seed_center: bool,
}

/// Pixels per degree of visual angle for the MIT1003 display geometry.
pub const DEFAULT_PIXELS_PER_DEGREE: f64 = 35.0;

impl Default for EngineParams {
    fn default() -> Self {
        Self {
            n_fixations: 10,
            steps: 20,
            alpha: 0.05,
            sigma_xi: DEFAULT_PIXELS_PER_DEGREE,
            blur_sigma: 16.0,
            gamma: 0.0,
            grad_step: 0.02,
            seed_center: false,
        }
    }
}

impl EngineParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_fixations < 1 {
            return Err(Error::param("n_fixations must be at least 1"));
        }
        if self.steps < 1 {
            return Err(Error::param("steps must be at least 1"));
        }
        // alpha = 0 is accepted: it pins the search at its starting point.
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::param(format!("alpha must be non-negative, got {}", self.alpha)));
        }
        if !(self.sigma_xi > 0.0 && self.sigma_xi.is_finite()) {
            return Err(Error::param(format!("sigma_xi must be positive, got {}", self.sigma_xi)));
        }
        if !(self.blur_sigma > 0.0 && self.blur_sigma.is_finite()) {
            return Err(Error::param(format!(
                "blur_sigma must be positive, got {}",
                self.blur_sigma
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::param(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if !(self.grad_step > 0.0 && self.grad_step.is_finite()) {
            return Err(Error::param(format!(
                "grad_step must be positive, got {}",
                self.grad_step
            )));
        }
        Ok(())
    }
}

pub fn normalize_fixation(f: &Fixation, width: usize, height: usize) -> Result<(f64, f64)> {
    if !f.in_bounds(width, height) {
        return Err(Error::Bounds {
            x: f.x,
            y: f.y,
            width,
            height,
        });
    }
    Ok((f.x / width as f64, f.y / height as f64))
}

pub fn denormalize_fixation(u: f64, v: f64, width: usize, height: usize) -> Fixation {
    Fixation::new(u * width as f64, v * height as f64)
}

/// Clamps each coordinate to `[0, dim - 1]`. Non-finite coordinates map to 0.
pub fn clamp_fixation(f: &Fixation, width: usize, height: usize) -> Fixation {
    let clamp = |v: f64, dim: usize| {
        if v.is_nan() {
            0.0
        } else {
            v.clamp(0.0, (dim - 1) as f64)
        }
    };
    Fixation {
        x: clamp(f.x, width),
        y: clamp(f.y, height),
        t_ms: f.t_ms,
    }
}

/// One parse failure while reading a JSONL file.
#[derive(Debug, Clone, PartialEq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

/// Reads a JSONL file, collecting malformed lines instead of failing on them.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<(Vec<T>, Vec<LineError>)> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(rec) => records.push(rec),
            Err(e) => errors.push(LineError {
                line: idx + 1,
                message: e.to_string(),
            }),
        }
    }
    Ok((records, errors))
}

pub fn write_jsonl<'a, T, I>(path: &Path, records: I) -> Result<()>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let mut out = BufWriter::new(File::create(path)?);
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
