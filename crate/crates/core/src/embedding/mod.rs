//! Image and text encoders that share one embedding space.
//!
//! Two backends ship with the crate: [`SyntheticBackend`], a deterministic
//! closed-form encoder used for oracle testing, and (with the `onnx`
//! feature) [`OnnxBackend`], which runs pretrained image and text encoders
//! described by a [`BackendManifest`].

mod gradient;
mod manifest;
#[cfg(feature = "onnx")]
mod onnx;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Fixation, Stimulus};

pub use gradient::FoveatedObjective;
pub use manifest::BackendManifest;
#[cfg(feature = "onnx")]
pub use onnx::OnnxBackend;
pub use synthetic::SyntheticBackend;

/// A finite embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Numeric("embedding must have at least one component".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("embedding has non-finite components".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|v| v * c).collect())
    }

    pub fn basis(dimension: usize, index: usize) -> Result<Self> {
        if index >= dimension {
            return Err(Error::param(format!("basis index {index} out of range for dimension {dimension}")));
        }
        let mut v = vec![0.0; dimension];
        v[index] = 1.0;
        Self::new(v)
    }
}

/// Static description of a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub name: String,
    pub dimension: usize,
    pub input_resolution: usize,
    pub has_analytic_gradient: bool,
}

pub trait EmbeddingBackend: Send + Sync {
    fn info(&self) -> &BackendInfo;

    fn embed_image(&self, stimulus: &Stimulus) -> Result<EmbeddingVector>;

    fn embed_text(&self, caption: &str) -> Result<EmbeddingVector>;

    /// Loss and its gradient with respect to the normalized fixation, for
    /// backends that can differentiate through the foveation blob. Only
    /// called when `info().has_analytic_gradient` is set.
    fn foveated_loss_gradient(&self, objective: &FoveatedObjective<'_>, at: &Fixation) -> Result<(f64, [f64; 2])> {
        let _ = (objective, at);
        Err(Error::Backend(format!(
            "backend {} does not provide analytic gradients",
            self.info().name
        )))
    }
}

impl<B: EmbeddingBackend + ?Sized> EmbeddingBackend for Box<B> {
    fn info(&self) -> &BackendInfo {
        (**self).info()
    }

    fn embed_image(&self, stimulus: &Stimulus) -> Result<EmbeddingVector> {
        (**self).embed_image(stimulus)
    }

    fn embed_text(&self, caption: &str) -> Result<EmbeddingVector> {
        (**self).embed_text(caption)
    }

    fn foveated_loss_gradient(&self, objective: &FoveatedObjective<'_>, at: &Fixation) -> Result<(f64, [f64; 2])> {
        (**self).foveated_loss_gradient(objective, at)
    }
}

/// `(a . b) / (|a| |b|)`, clamped to `[-1, 1]` against rounding.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dimension() != b.dimension() {
        return Err(Error::Numeric(format!(
            "dimension mismatch: {} vs {}",
            a.dimension(),
            b.dimension()
        )));
    }
    let sq = |v: &EmbeddingVector| v.values().iter().map(|x| x * x).sum::<f64>();
    let (saa, sbb) = (sq(a), sq(b));
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Numeric("cosine similarity of a zero-norm vector".into()));
    }
    let dot: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum();
    // sqrt of the product keeps cos(a, a) exactly 1.
    Ok((dot / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Loads the backend described by a manifest file.
#[cfg(feature = "onnx")]
pub fn load_backend(manifest_path: &std::path::Path) -> Result<Box<dyn EmbeddingBackend>> {
    let manifest = BackendManifest::load(manifest_path)?;
    Ok(Box::new(OnnxBackend::from_manifest(&manifest)?))
}
