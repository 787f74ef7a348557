use super::{EmbeddingBackend, EmbeddingVector};
use crate::engine::alignment_loss;
use crate::error::{Error, Result};
use crate::foveation::{self, FoveatedStimulus, FoveationMask};
use crate::model::{EngineParams, Fixation, Stimulus};

/// The alignment loss of a foveated stimulus as a function of the fixation.
///
/// Holds everything that stays fixed while one fixation is optimized: the
/// clean and coarse stimuli, the decayed history of past masks and the
/// target embedding.
pub struct FoveatedObjective<'a> {
    backend: &'a dyn EmbeddingBackend,
    clean: &'a Stimulus,
    coarse: &'a Stimulus,
    target: &'a EmbeddingVector,
    history: Vec<f64>,
    history_contributors: Vec<(Fixation, f64)>,
    sigma_xi: f64,
    grad_step: f64,
}

impl<'a> FoveatedObjective<'a> {
    pub fn new(
        backend: &'a dyn EmbeddingBackend,
        clean: &'a Stimulus,
        coarse: &'a Stimulus,
        past_masks: &[FoveationMask],
        target: &'a EmbeddingVector,
        params: &EngineParams,
    ) -> Result<Self> {
        params.validate()?;
        if clean.dimensions() != coarse.dimensions() {
            return Err(Error::Shape {
                expected: clean.dimensions(),
                actual: coarse.dimensions(),
            });
        }
        let (w, h) = clean.dimensions();
        let (history, history_contributors) = foveation::decayed_history(past_masks, params.gamma, w, h)?;
        Ok(Self {
            backend,
            clean,
            coarse,
            target,
            history,
            history_contributors,
            sigma_xi: params.sigma_xi,
            grad_step: params.grad_step,
        })
    }

    pub fn backend(&self) -> &dyn EmbeddingBackend {
        self.backend
    }

    pub fn clean(&self) -> &Stimulus {
        self.clean
    }

    pub fn coarse(&self) -> &Stimulus {
        self.coarse
    }

    pub fn target(&self) -> &EmbeddingVector {
        self.target
    }

    pub fn sigma_xi(&self) -> f64 {
        self.sigma_xi
    }

    /// Sum of the decayed past masks, before clipping.
    pub fn history(&self) -> &[f64] {
        &self.history
    }

    pub fn mask_at(&self, at: &Fixation) -> Result<FoveationMask> {
        let (w, h) = self.clean.dimensions();
        let blob = foveation::gaussian_blob(at, self.sigma_xi, w, h)?;
        Ok(foveation::combine_with_history(&blob, &self.history, &self.history_contributors))
    }

    pub fn composite(&self, at: &Fixation) -> Result<FoveatedStimulus> {
        foveation::foveate(self.clean, self.coarse, &self.mask_at(at)?)
    }

    /// One forward pass: composite at `at`, embed, compare with the target.
    pub fn loss_at(&self, at: &Fixation) -> Result<f64> {
        let pi = self.composite(at)?;
        let e = self.backend.embed_image(&pi.stimulus)?;
        alignment_loss(&e, self.target)
    }

    /// Loss at `at` and its gradient in normalized coordinates.
    ///
    /// Uses the backend's analytic gradient when it advertises one,
    /// otherwise central differences with step `grad_step` on each
    /// coordinate (four extra forward passes). Where a central stencil
    /// would leave the image, a second-order one-sided stencil is used
    /// instead, which costs the same two extra passes per coordinate.
    pub fn loss_and_gradient(&self, at: &Fixation) -> Result<(f64, [f64; 2])> {
        if self.backend.info().has_analytic_gradient {
            return self.backend.foveated_loss_gradient(self, at);
        }
        let base = self.loss_at(at)?;
        let grad = self.finite_difference_gradient(at, base)?;
        Ok((base, grad))
    }

    pub fn finite_difference_gradient(&self, at: &Fixation, base: f64) -> Result<[f64; 2]> {
        let (w, h) = self.clean.dimensions();
        let h_step = self.grad_step;
        let u = at.x / w as f64;
        let v = at.y / h as f64;
        let u_max = (w - 1) as f64 / w as f64;
        let v_max = (h - 1) as f64 / h as f64;

        let eval = |du: f64, dv: f64| -> Result<f64> {
            let f = Fixation::new((u + du) * w as f64, (v + dv) * h as f64);
            self.loss_at(&f)
        };
        let derivative = |pos: f64, max: f64, along_x: bool| -> Result<f64> {
            let shift = |d: f64| if along_x { eval(d, 0.0) } else { eval(0.0, d) };
            let fits_lo = pos - h_step >= 0.0;
            let fits_hi = pos + h_step <= max;
            if fits_lo && fits_hi || (!fits_lo && !fits_hi) {
                Ok((shift(h_step)? - shift(-h_step)?) / (2.0 * h_step))
            } else if fits_lo {
                Ok((3.0 * base - 4.0 * shift(-h_step)? + shift(-2.0 * h_step)?) / (2.0 * h_step))
            } else {
                Ok((-3.0 * base + 4.0 * shift(h_step)? - shift(2.0 * h_step)?) / (2.0 * h_step))
            }
        };
        Ok([derivative(u, u_max, true)?, derivative(v, v_max, false)?])
    }
}
