//! Normalized 2-D densities over a cell grid.
//!
//! On disk a density is either a JSON object
//! `{"width": W, "height": H, "weights": [...]}` with `W * H` row-major
//! weights, or a grayscale image whose pixel values are normalized to sum 1.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDensity")]
pub struct DensityMap {
    width: usize,
    height: usize,
    weights: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDensity {
    width: usize,
    height: usize,
    weights: Vec<f64>,
}

impl TryFrom<RawDensity> for DensityMap {
    type Error = Error;

    fn try_from(raw: RawDensity) -> Result<Self> {
        DensityMap::from_weights(raw.width, raw.height, raw.weights)
    }
}

impl DensityMap {
    /// Normalizes non-negative weights to sum 1.
    pub fn from_weights(width: usize, height: usize, weights: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param("density grid must be non-empty"));
        }
        if weights.len() != width * height {
            return Err(Error::Input(format!(
                "density needs {} weights, got {}",
                width * height,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::param("density weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::param("density has no mass"));
        }
        Ok(Self {
            width,
            height,
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform(width: usize, height: usize) -> Result<Self> {
        Self::from_weights(width, height, vec![1.0; width * height])
    }

    pub fn point_mass(width: usize, height: usize, col: usize, row: usize) -> Result<Self> {
        if col >= width || row >= height {
            return Err(Error::param(format!("cell ({col}, {row}) outside {width}x{height} grid")));
        }
        let mut w = vec![0.0; width * height];
        w[row * width + col] = 1.0;
        Self::from_weights(width, height, w)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, col: usize, row: usize) -> f64 {
        self.weights[row * self.width + col]
    }

    /// Mass inside the cells whose centers fall in the normalized rectangle
    /// `[x0, x1) x [y0, y1)`.
    pub fn mass_in(&self, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
        let mut m = 0.0;
        for row in 0..self.height {
            let cy = (row as f64 + 0.5) / self.height as f64;
            if cy < y0 || cy >= y1 {
                continue;
            }
            for col in 0..self.width {
                let cx = (col as f64 + 0.5) / self.width as f64;
                if cx >= x0 && cx < x1 {
                    m += self.weight(col, row);
                }
            }
        }
        m
    }

    /// Row-major index of the heaviest cell; ties go to the first.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, w) in self.weights.iter().enumerate() {
            if *w > self.weights[best] {
                best = i;
            }
        }
        (best % self.width, best / self.width)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let is_json = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            let text = std::fs::read_to_string(path)?;
            return Ok(serde_json::from_str(&text)?);
        }
        let img = image::open(path)?.to_luma32f();
        let (w, h) = img.dimensions();
        let weights = img.pixels().map(|p| f64::from(p[0])).collect();
        Self::from_weights(w as usize, h as usize, weights)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }
}
