//! Scanpath generation by per-fixation gradient descent on the alignment
//! loss between a foveated stimulus and a target embedding.
//!
//! For each fixation the search starts at the previous optimum (or at the
//! image center for the first fixation), takes `steps` descent steps
//! `xi <- clamp(xi - alpha * grad L)` in normalized coordinates, and keeps
//! the candidate with the lowest loss seen. The loss is
//! `L = 1 - cos(e_pi, e_target)`.

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_similarity, EmbeddingBackend, EmbeddingVector, FoveatedObjective};
use crate::error::{Error, Result};
use crate::foveation::{self, FoveationMask};
use crate::model::{clamp_fixation, EngineParams, Fixation, Scanpath, ScanpathSource, Stimulus};

/// What the exploration tries to align with.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetSpec {
    CaptionText(String),
    VisualCleanImage(Stimulus),
    ExplicitVector(EmbeddingVector),
}

impl TargetSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            TargetSpec::CaptionText(_) => "caption_text",
            TargetSpec::VisualCleanImage(_) => "visual_clean_image",
            TargetSpec::ExplicitVector(_) => "explicit_vector",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub fixation: Fixation,
    pub loss: f64,
}

/// Every loss evaluation made while optimizing one fixation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub fixation_index: usize,
    pub steps: Vec<TraceStep>,
    pub best_loss: f64,
    pub best_step: usize,
}

impl OptimizationTrace {
    fn new(fixation_index: usize) -> Self {
        Self {
            fixation_index,
            steps: Vec::new(),
            best_loss: f64::INFINITY,
            best_step: 0,
        }
    }

    fn record(&mut self, step: TraceStep) {
        // Strict comparison keeps the earliest step on ties.
        if step.loss < self.best_loss {
            self.best_loss = step.loss;
            self.best_step = step.step;
        }
        self.steps.push(step);
    }

    pub fn best_fixation(&self) -> Option<Fixation> {
        self.steps.get(self.best_step).map(|s| s.fixation)
    }
}

/// `1 - cos(e_pi, e_target)`; 0 when aligned, 2 when antiparallel.
pub fn alignment_loss(e_pi: &EmbeddingVector, e_target: &EmbeddingVector) -> Result<f64> {
    Ok(1.0 - cosine_similarity(e_pi, e_target)?)
}

pub fn resolve_target(backend: &dyn EmbeddingBackend, spec: &TargetSpec) -> Result<EmbeddingVector> {
    match spec {
        TargetSpec::CaptionText(caption) => backend.embed_text(caption),
        TargetSpec::VisualCleanImage(stimulus) => backend.embed_image(stimulus),
        TargetSpec::ExplicitVector(v) => Ok(v.clone()),
    }
}

/// Runs exactly `params.steps` descent steps from `init` and returns the
/// lowest-loss candidate.
///
/// A backend failure aborts with [`Error::Aborted`], carrying the steps
/// completed so far.
pub fn optimize_fixation(
    backend: &dyn EmbeddingBackend,
    clean: &Stimulus,
    coarse: &Stimulus,
    past_masks: &[FoveationMask],
    target: &EmbeddingVector,
    init: Fixation,
    params: &EngineParams,
) -> Result<(Fixation, OptimizationTrace)> {
    optimize_indexed(backend, clean, coarse, past_masks, target, init, params, 0)
}

#[allow(clippy::too_many_arguments)]
fn optimize_indexed(
    backend: &dyn EmbeddingBackend,
    clean: &Stimulus,
    coarse: &Stimulus,
    past_masks: &[FoveationMask],
    target: &EmbeddingVector,
    init: Fixation,
    params: &EngineParams,
    fixation_index: usize,
) -> Result<(Fixation, OptimizationTrace)> {
    let (w, h) = clean.dimensions();
    if !init.in_bounds(w, h) {
        return Err(Error::Bounds {
            x: init.x,
            y: init.y,
            width: w,
            height: h,
        });
    }
    let objective = FoveatedObjective::new(backend, clean, coarse, past_masks, target, params)?;
    let mut trace = OptimizationTrace::new(fixation_index);
    let mut current = Fixation::new(init.x, init.y);
    for step in 0..params.steps {
        let (loss, grad) = match objective.loss_and_gradient(&current) {
            Ok(v) => v,
            Err(source) => {
                return Err(Error::Aborted {
                    source: Box::new(source),
                    partial: Box::new(trace),
                })
            }
        };
        trace.record(TraceStep {
            step,
            fixation: current,
            loss,
        });
        let next = Fixation::new(
            current.x - params.alpha * grad[0] * w as f64,
            current.y - params.alpha * grad[1] * h as f64,
        );
        current = clamp_fixation(&next, w, h);
    }
    let best = trace.best_fixation().expect("at least one step");
    Ok((best, trace))
}

/// Center of the image in continuous pixel coordinates.
pub fn image_center(width: usize, height: usize) -> Fixation {
    Fixation::new(width as f64 / 2.0, height as f64 / 2.0)
}

/// Generates a scanpath of `params.n_fixations` fixations.
pub fn generate_scanpath(
    clean: &Stimulus,
    spec: &TargetSpec,
    params: &EngineParams,
    backend: &dyn EmbeddingBackend,
) -> Result<(Scanpath, Vec<OptimizationTrace>)> {
    params.validate()?;
    let target = resolve_target(backend, spec)?;
    let coarse = foveation::coarse(clean, params.blur_sigma)?;
    generate_with_target(clean, &coarse, &target, params, backend, backend.info().name.as_str())
}

/// Like [`generate_scanpath`] with an already resolved target and coarse stimulus.
pub fn generate_with_target(
    clean: &Stimulus,
    coarse: &Stimulus,
    target: &EmbeddingVector,
    params: &EngineParams,
    backend: &dyn EmbeddingBackend,
    model_tag: &str,
) -> Result<(Scanpath, Vec<OptimizationTrace>)> {
    params.validate()?;
    let (w, h) = clean.dimensions();
    let center = image_center(w, h);
    let mut start = center;
    let mut fixations = Vec::with_capacity(params.n_fixations);
    let mut traces = Vec::with_capacity(params.n_fixations);
    let mut past: Vec<FoveationMask> = Vec::with_capacity(params.n_fixations);
    for t in 0..params.n_fixations {
        let (best, trace) = optimize_indexed(backend, clean, coarse, &past, target, start, params, t)?;
        fixations.push(best);
        traces.push(trace);
        // With gamma = 0 past masks never contribute, so skip building them.
        if params.gamma > 0.0 {
            past.push(foveation::gaussian_blob(&best, params.sigma_xi, w, h)?);
        }
        start = if params.seed_center { center } else { best };
    }
    Ok((
        Scanpath::new(clean.image_id.clone(), fixations, ScanpathSource::Simulated, model_tag),
        traces,
    ))
}
