//! Reference scanpath generators: uniform random, centered Gaussian,
//! density sampling and winner-take-all with inhibition of return.
//!
//! All generators are pure functions of their inputs and seed. Draws are
//! independent across fixations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::density::DensityMap;
use crate::error::{Error, Result};
use crate::model::{Fixation, Scanpath, ScanpathSource};

/// Default standard deviation of the center baseline, as a fraction of each dimension.
pub const DEFAULT_CENTER_SIGMA_FRAC: f64 = 0.22;

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::param("scanpath length must be at least 1"))
    } else {
        Ok(())
    }
}

fn scanpath(fixations: Vec<Fixation>, tag: &str) -> Scanpath {
    Scanpath::new("", fixations, ScanpathSource::Simulated, tag)
}

pub fn random_scanpath(width: usize, height: usize, n: usize, seed: u64) -> Result<Scanpath> {
    check_n(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fixations = (0..n)
        .map(|_| {
            Fixation::new(
                rng.random::<f64>() * width as f64,
                rng.random::<f64>() * height as f64,
            )
        })
        .collect();
    Ok(scanpath(fixations, "random"))
}

/// Samples a Gaussian centered in the image, redrawing samples that fall
/// outside it.
pub fn center_scanpath(width: usize, height: usize, n: usize, seed: u64, sigma_frac: f64) -> Result<Scanpath> {
    check_n(n)?;
    if !(sigma_frac > 0.0 && sigma_frac.is_finite()) {
        return Err(Error::param(format!("sigma_frac must be positive, got {sigma_frac}")));
    }
    let (w, h) = (width as f64, height as f64);
    let nx = Normal::new(w / 2.0, sigma_frac * w).map_err(|e| Error::param(e.to_string()))?;
    let ny = Normal::new(h / 2.0, sigma_frac * h).map_err(|e| Error::param(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |dist: &Normal<f64>, limit: f64| loop {
        let v = dist.sample(&mut rng);
        if v >= 0.0 && v < limit {
            break v;
        }
    };
    let fixations = (0..n).map(|_| {
        let x = draw(&nx, w);
        let y = draw(&ny, h);
        Fixation::new(x, y)
    });
    Ok(scanpath(fixations.collect(), "center"))
}

/// Inverse-CDF sampling over density cells, with uniform jitter inside the
/// chosen cell, scaled to the image.
pub fn density_scanpath(density: &DensityMap, width: usize, height: usize, n: usize, seed: u64) -> Result<Scanpath> {
    check_n(n)?;
    let mut cdf = Vec::with_capacity(density.weights().len());
    let mut acc = 0.0;
    for w in density.weights() {
        acc += w;
        cdf.push(acc);
    }
    let total = acc;
    if total <= 0.0 {
        return Err(Error::param("density has no mass"));
    }
    let (gw, gh) = (density.width(), density.height());
    let cell_w = width as f64 / gw as f64;
    let cell_h = height as f64 / gh as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fixations = (0..n)
        .map(|_| {
            let r = rng.random::<f64>() * total;
            let mut idx = cdf.partition_point(|&c| c <= r).min(cdf.len() - 1);
            // Rounding can push r past the last cell; fall back to the last
            // cell with mass.
            while density.weights()[idx] == 0.0 && idx > 0 {
                idx -= 1;
            }
            let (col, row) = (idx % gw, idx / gw);
            let x = (col as f64 + rng.random::<f64>()) * cell_w;
            let y = (row as f64 + rng.random::<f64>()) * cell_h;
            Fixation::new(x.min(width as f64 - 1e-9), y.min(height as f64 - 1e-9))
        })
        .collect();
    Ok(scanpath(fixations, "density"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WtaScanpath {
    pub scanpath: Scanpath,
    /// Set when the saliency ran out before `n` fixations were produced.
    pub exhausted: bool,
}

/// Winner-take-all: repeatedly fixate the most salient cell center, then
/// zero every cell whose center lies within `ior_radius` pixels of it.
/// Ties go to the first cell in row-major order.
pub fn wta_scanpath(saliency: &DensityMap, width: usize, height: usize, n: usize, ior_radius: f64) -> Result<WtaScanpath> {
    check_n(n)?;
    if !(ior_radius >= 0.0) {
        return Err(Error::param(format!("ior_radius must be non-negative, got {ior_radius}")));
    }
    let gw = saliency.width();
    let cell_w = width as f64 / gw as f64;
    let cell_h = height as f64 / saliency.height() as f64;
    let center_of = |idx: usize| Fixation::new(((idx % gw) as f64 + 0.5) * cell_w, ((idx / gw) as f64 + 0.5) * cell_h);
    let mut map = saliency.weights().to_vec();
    let mut fixations = Vec::with_capacity(n);
    let mut exhausted = false;
    while fixations.len() < n {
        let mut best = 0;
        for (i, v) in map.iter().enumerate() {
            if *v > map[best] {
                best = i;
            }
        }
        if map[best] <= 0.0 {
            exhausted = true;
            break;
        }
        let f = center_of(best);
        for (i, v) in map.iter_mut().enumerate() {
            if center_of(i).distance(&f) <= ior_radius {
                *v = 0.0;
            }
        }
        map[best] = 0.0;
        fixations.push(f);
    }
    if exhausted {
        log::warn!(
            "saliency exhausted after {} of {n} fixations",
            fixations.len()
        );
    }
    Ok(WtaScanpath {
        scanpath: scanpath(fixations, "wta"),
        exhausted,
    })
}
