//! Coarse stimuli, Gaussian foveation masks and foveated composites.
//!
//! A foveated stimulus mixes the clean image `S` and its coarse version
//! `S~` pixelwise through a reveal mask `G` with values in `[0, 1]`:
//! `pi = G * S + (1 - G) * S~`.

use crate::error::{Error, Result};
use crate::model::{Fixation, Stimulus};

/// Kernel support in standard deviations.
const KERNEL_TRUNCATE: f64 = 4.0;

/// A reveal mask with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FoveationMask {
    width: usize,
    height: usize,
    values: Vec<f64>,
    /// Fixations that contributed to the mask, with their weights.
    contributors: Vec<(Fixation, f64)>,
}

impl FoveationMask {
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Input(format!(
                "mask needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Input("mask values must lie in [0, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            values,
            contributors: Vec::new(),
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::from_values(width, height, vec![value; width * height])
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

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn contributors(&self) -> &[(Fixation, f64)] {
        &self.contributors
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoveatedStimulus {
    pub stimulus: Stimulus,
    pub fixation_set: Vec<(Fixation, f64)>,
}

fn check_sigma(sigma: f64, what: &str) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("{what} must be positive, got {sigma}")))
    }
}

fn check_shape(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Shape { expected, actual })
    }
}

/// Unnormalized Gaussian blob: `exp(-|p - center|^2 / (2 sigma^2))`, peak 1.
///
/// Evaluated at integer pixel positions. The blob is separable, so it is
/// built from one row factor and one column factor.
pub fn gaussian_blob(center: &Fixation, sigma_xi: f64, width: usize, height: usize) -> Result<FoveationMask> {
    check_sigma(sigma_xi, "sigma_xi")?;
    let denom = 2.0 * sigma_xi * sigma_xi;
    let fx: Vec<f64> = (0..width)
        .map(|x| (-(x as f64 - center.x).powi(2) / denom).exp())
        .collect();
    let fy: Vec<f64> = (0..height)
        .map(|y| (-(y as f64 - center.y).powi(2) / denom).exp())
        .collect();
    let mut values = Vec::with_capacity(width * height);
    for gy in &fy {
        values.extend(fx.iter().map(|gx| gx * gy));
    }
    Ok(FoveationMask {
        width,
        height,
        values,
        contributors: vec![(*center, 1.0)],
    })
}

/// Half-sample symmetric reflection (`d c b a | a b c d | d c b a`).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    if m < n {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (KERNEL_TRUNCATE * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

fn convolve_axis(src: &[[f64; 3]], width: usize, height: usize, kernel: &[f64], horizontal: bool) -> Vec<[f64; 3]> {
    let radius = (kernel.len() / 2) as isize;
    let mut out = vec![[0.0; 3]; src.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = [0.0; 3];
            for (ki, w) in kernel.iter().enumerate() {
                let off = ki as isize - radius;
                let idx = if horizontal {
                    y * width + reflect(x as isize + off, width)
                } else {
                    reflect(y as isize + off, height) * width + x
                };
                let p = src[idx];
                acc[0] += w * p[0];
                acc[1] += w * p[1];
                acc[2] += w * p[2];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// Gaussian blur of every channel with reflective boundaries.
pub fn coarse(stimulus: &Stimulus, blur_sigma: f64) -> Result<Stimulus> {
    check_sigma(blur_sigma, "blur_sigma")?;
    let (w, h) = stimulus.dimensions();
    let kernel = gaussian_kernel(blur_sigma);
    let tmp = convolve_axis(stimulus.pixels(), w, h, &kernel, true);
    let mut out = convolve_axis(&tmp, w, h, &kernel, false);
    for p in &mut out {
        for c in p.iter_mut() {
            *c = c.clamp(0.0, 1.0);
        }
    }
    Ok(Stimulus::from_parts_unchecked(stimulus.image_id.clone(), w, h, out))
}

/// Pixelwise `G * S + (1 - G) * S~`.
pub fn foveate(clean: &Stimulus, coarse: &Stimulus, mask: &FoveationMask) -> Result<FoveatedStimulus> {
    let dims = clean.dimensions();
    check_shape(dims, coarse.dimensions())?;
    check_shape(dims, mask.dimensions())?;
    let pixels = clean
        .pixels()
        .iter()
        .zip(coarse.pixels())
        .zip(mask.values())
        .map(|((s, t), &g)| {
            let mut p = [0.0; 3];
            for c in 0..3 {
                // Exact at g = 1 and g = 0.
                p[c] = (g * s[c] + (1.0 - g) * t[c]).clamp(0.0, 1.0);
            }
            p
        })
        .collect();
    Ok(FoveatedStimulus {
        stimulus: Stimulus::from_parts_unchecked(clean.image_id.clone(), dims.0, dims.1, pixels),
        fixation_set: mask.contributors.clone(),
    })
}

/// Decayed sum of past masks, `sum_j gamma^age_j * past_j`, without the
/// current mask or the final clipping.
///
/// `past` is ordered oldest first, so the last entry has age 1.
pub fn decayed_history(past: &[FoveationMask], gamma: f64, width: usize, height: usize) -> Result<(Vec<f64>, Vec<(Fixation, f64)>)> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::param(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    let mut acc = vec![0.0; width * height];
    let mut contributors = Vec::new();
    for (j, mask) in past.iter().enumerate() {
        check_shape((width, height), mask.dimensions())?;
        let age = (past.len() - j) as i32;
        let weight = gamma.powi(age);
        if weight == 0.0 {
            continue;
        }
        for (a, v) in acc.iter_mut().zip(&mask.values) {
            *a += weight * v;
        }
        contributors.extend(mask.contributors.iter().map(|&(f, w)| (f, w * weight)));
    }
    Ok((acc, contributors))
}

/// Combines the current mask with decayed past masks:
/// `min(1, current + sum_j gamma^age_j * past_j)`.
pub fn cumulative_mask(past: &[FoveationMask], current: &FoveationMask, gamma: f64) -> Result<FoveationMask> {
    let (w, h) = current.dimensions();
    let (history, past_contributors) = decayed_history(past, gamma, w, h)?;
    Ok(combine_with_history(current, &history, &past_contributors))
}

pub(crate) fn combine_with_history(current: &FoveationMask, history: &[f64], past_contributors: &[(Fixation, f64)]) -> FoveationMask {
    let values = current
        .values
        .iter()
        .zip(history)
        .map(|(c, h)| (c + h).min(1.0))
        .collect();
    let mut contributors = past_contributors.to_vec();
    contributors.extend_from_slice(&current.contributors);
    FoveationMask {
        width: current.width,
        height: current.height,
        values,
        contributors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_stimulus(seed: u64, w: usize, h: usize) -> Stimulus {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let px = (0..w * h)
            .map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        Stimulus::new("r", w, h, px).unwrap()
    }

    /// Direct 2-D convolution with the same reflected boundary, used as an
    /// independent check of the separable implementation.
    fn direct_blur(s: &Stimulus, sigma: f64) -> Vec<[f64; 3]> {
        let (w, h) = s.dimensions();
        let radius = (4.0 * sigma).ceil().max(1.0) as isize;
        let mirror = |i: isize, n: isize| -> usize {
            let mut i = i;
            loop {
                if i < 0 {
                    i = -i - 1;
                } else if i >= n {
                    i = 2 * n - 1 - i;
                } else {
                    return i as usize;
                }
            }
        };
        let mut norm = 0.0;
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                norm += (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
            }
        }
        let mut out = vec![[0.0; 3]; w * h];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut acc = [0.0; 3];
                for dy in -radius..=radius {
                    for dx in -radius..=radius {
                        let wgt = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp() / norm;
                        let p = s.pixel(mirror(x + dx, w as isize), mirror(y + dy, h as isize));
                        for c in 0..3 {
                            acc[c] += wgt * p[c];
                        }
                    }
                }
                out[y as usize * w + x as usize] = acc;
            }
        }
        out
    }

    #[test]
    fn blob_analytic_values() {
        let m = gaussian_blob(&Fixation::new(20.0, 20.0), 4.0, 64, 48).unwrap();
        assert_eq!(m.value(20, 20), 1.0);
        assert!((m.value(24, 20) - (-0.5f64).exp()).abs() < 1e-12);
        assert!((m.value(20, 32) - (-4.5f64).exp()).abs() < 1e-12);
        assert!(((-4.5f64).exp() - 0.0111).abs() < 1e-4);
        assert!(m.values().iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn blob_rejects_bad_sigma() {
        assert!(matches!(
            gaussian_blob(&Fixation::new(1.0, 1.0), 0.0, 4, 4),
            Err(Error::Parameter(_))
        ));
        assert!(gaussian_blob(&Fixation::new(1.0, 1.0), -2.0, 4, 4).is_err());
    }

    #[test]
    fn blur_of_constant_is_constant() {
        let s = Stimulus::filled("g", 17, 11, [0.4, 0.4, 0.4]).unwrap();
        let b = coarse(&s, 3.0).unwrap();
        for p in b.pixels() {
            for c in p {
                assert!((c - 0.4).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn blur_single_pixel_matches_direct_convolution() {
        let mut gray = vec![0.0; 31 * 29];
        gray[14 * 31 + 15] = 1.0;
        let s = Stimulus::from_gray("dot", 31, 29, &gray).unwrap();
        let b = coarse(&s, 2.5).unwrap();
        let oracle = direct_blur(&s, 2.5);
        let mut mass = 0.0;
        for (got, want) in b.pixels().iter().zip(&oracle) {
            assert!((got[0] - want[0]).abs() < 1e-12);
            mass += got[0];
        }
        assert!((mass - 1.0).abs() < 1e-6);
    }

    #[test]
    fn blur_matches_direct_convolution_near_borders() {
        // Kernel radius exceeds the image size, exercising repeated reflection.
        let s = random_stimulus(3, 9, 6);
        let b = coarse(&s, 3.0).unwrap();
        let oracle = direct_blur(&s, 3.0);
        for (got, want) in b.pixels().iter().zip(&oracle) {
            for c in 0..3 {
                assert!((got[c] - want[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tiny_blur_is_nearly_identity() {
        let (w, h) = (40, 30);
        let gray: Vec<f64> = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                0.5 + 0.4 * (x / 7.0).sin() * (y / 5.0).cos()
            })
            .collect();
        let s = Stimulus::from_gray("smooth", w, h, &gray).unwrap();
        let b = coarse(&s, 0.3).unwrap();
        let oracle = direct_blur(&s, 0.3);
        let mut max_dev: f64 = 0.0;
        for ((got, want), orig) in b.pixels().iter().zip(&oracle).zip(s.pixels()) {
            assert!((got[0] - want[0]).abs() < 1e-12);
            max_dev = max_dev.max((got[0] - orig[0]).abs());
        }
        assert!(max_dev < 0.01, "max deviation {max_dev}");
    }

    #[test]
    fn foveate_examples() {
        let s = random_stimulus(1, 64, 64);
        let t = coarse(&s, 4.0).unwrap();
        let center = Fixation::new(10.0, 12.0);
        let mask = gaussian_blob(&center, 3.0, 64, 64).unwrap();
        let pi = foveate(&s, &t, &mask).unwrap();
        assert_eq!(pi.stimulus.pixel(10, 12), s.pixel(10, 12));
        for c in 0..3 {
            assert!((pi.stimulus.pixel(63, 63)[c] - t.pixel(63, 63)[c]).abs() < 1e-4);
        }
        assert_eq!(pi.fixation_set, vec![(center, 1.0)]);

        let ones = Stimulus::filled("1", 64, 64, [1.0; 3]).unwrap();
        let zeros = Stimulus::filled("0", 64, 64, [0.0; 3]).unwrap();
        let pi = foveate(&ones, &zeros, &mask).unwrap();
        for (p, g) in pi.stimulus.pixels().iter().zip(mask.values()) {
            assert!((p[0] - g).abs() < 1e-15);
        }
    }

    #[test]
    fn foveate_shape_mismatch() {
        let s = random_stimulus(1, 8, 8);
        let t = random_stimulus(2, 8, 7);
        let m = FoveationMask::constant(8, 8, 1.0).unwrap();
        assert!(matches!(foveate(&s, &t, &m), Err(Error::Shape { .. })));
        let m = FoveationMask::constant(7, 8, 1.0).unwrap();
        assert!(matches!(foveate(&s, &s, &m), Err(Error::Shape { .. })));
    }

    #[test]
    fn extreme_masks_select_inputs() {
        let s = random_stimulus(5, 12, 9);
        let t = coarse(&s, 2.0).unwrap();
        let all = foveate(&s, &t, &FoveationMask::constant(12, 9, 1.0).unwrap()).unwrap();
        assert_eq!(all.stimulus.pixels(), s.pixels());
        let none = foveate(&s, &t, &FoveationMask::constant(12, 9, 0.0).unwrap()).unwrap();
        assert_eq!(none.stimulus.pixels(), t.pixels());
    }

    #[test]
    fn cumulative_mask_examples() {
        let m1 = gaussian_blob(&Fixation::new(2.0, 2.0), 2.0, 8, 8).unwrap();
        let m2 = gaussian_blob(&Fixation::new(5.0, 5.0), 2.0, 8, 8).unwrap();
        let zero = cumulative_mask(&[m1.clone()], &m2, 0.0).unwrap();
        assert_eq!(zero.values(), m2.values());

        let full = cumulative_mask(&[m1.clone()], &m2, 1.0).unwrap();
        for ((c, a), b) in full.values().iter().zip(m1.values()).zip(m2.values()) {
            assert_eq!(*c, (a + b).min(1.0));
        }

        let past = FoveationMask::constant(1, 1, 0.8).unwrap();
        let cur = FoveationMask::constant(1, 1, 0.1).unwrap();
        let half = cumulative_mask(&[past], &cur, 0.5).unwrap();
        assert!((half.value(0, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cumulative_mask_decays_by_age() {
        let a = FoveationMask::constant(1, 1, 0.2).unwrap();
        let b = FoveationMask::constant(1, 1, 0.2).unwrap();
        let cur = FoveationMask::constant(1, 1, 0.0).unwrap();
        // a has age 2, b has age 1.
        let m = cumulative_mask(&[a, b], &cur, 0.5).unwrap();
        assert!((m.value(0, 0) - (0.25 * 0.2 + 0.5 * 0.2)).abs() < 1e-15);
    }

    #[test]
    fn cumulative_mask_rejects_mismatch() {
        let a = FoveationMask::constant(2, 1, 0.2).unwrap();
        let cur = FoveationMask::constant(1, 1, 0.0).unwrap();
        assert!(matches!(cumulative_mask(&[a], &cur, 0.5), Err(Error::Shape { .. })));
        assert!(cumulative_mask(&[], &cur, 1.5).is_err());
    }

    proptest! {
        #[test]
        fn foveate_is_convex_combination(seed in 0u64..500, cx in 0.0f64..24.0, cy in 0.0f64..16.0, sigma in 0.5f64..8.0) {
            let s = random_stimulus(seed, 24, 16);
            let t = coarse(&s, 2.0).unwrap();
            let mask = gaussian_blob(&Fixation::new(cx, cy), sigma, 24, 16).unwrap();
            let pi = foveate(&s, &t, &mask).unwrap();
            for ((p, a), b) in pi.stimulus.pixels().iter().zip(s.pixels()).zip(t.pixels()) {
                for c in 0..3 {
                    prop_assert!(p[c] >= a[c].min(b[c]) - 1e-9);
                    prop_assert!(p[c] <= a[c].max(b[c]) + 1e-9);
                }
            }
        }

        #[test]
        fn blob_translation_equivariant(cx in 8.0f64..24.0, cy in 8.0f64..24.0, dx in -4i32..4, dy in -4i32..4, sigma in 0.5f64..6.0) {
            let a = gaussian_blob(&Fixation::new(cx, cy), sigma, 32, 32).unwrap();
            let b = gaussian_blob(&Fixation::new(cx + dx as f64, cy + dy as f64), sigma, 32, 32).unwrap();
            for y in 4..28i32 {
                for x in 4..28i32 {
                    let shifted = b.value((x + dx) as usize, (y + dy) as usize);
                    prop_assert!((a.value(x as usize, y as usize) - shifted).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn blur_commutes_with_flip(seed in 0u64..200, sigma in 0.3f64..5.0) {
            let s = random_stimulus(seed, 13, 7);
            let a = coarse(&s, sigma).unwrap().flip_horizontal();
            let b = coarse(&s.flip_horizontal(), sigma).unwrap();
            for (p, q) in a.pixels().iter().zip(b.pixels()) {
                for c in 0..3 {
                    prop_assert!((p[c] - q[c]).abs() < 1e-9);
                }
            }
        }
    }
}
