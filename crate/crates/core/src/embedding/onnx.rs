use std::sync::Arc;

use tokenizers::Tokenizer;
use tract_onnx::prelude::*;

use super::{BackendInfo, BackendManifest, EmbeddingBackend, EmbeddingVector};
use crate::error::{Error, Result};
use crate::model::Stimulus;

type Plan = Arc<TypedRunnableModel>;

/// Pretrained encoders in ONNX format, executed forward-only with tract.
///
/// The image encoder takes a `1 x 3 x R x R` float tensor normalized with
/// the manifest's mean and standard deviation. The text encoder takes a
/// `1 x L` int64 tensor of token ids, plus an attention mask when the model
/// has a second input.
pub struct OnnxBackend {
    info: BackendInfo,
    image_plan: Plan,
    text_plan: Plan,
    text_takes_mask: bool,
    tokenizer: Tokenizer,
    context_length: usize,
    mean: [f64; 3],
    std: [f64; 3],
}

fn backend_err(what: &str, e: impl std::fmt::Display) -> Error {
    Error::Backend(format!("{what}: {e}"))
}

impl OnnxBackend {
    pub fn from_manifest(manifest: &BackendManifest) -> Result<Self> {
        manifest.validate()?;
        let r = manifest.input_resolution;
        let image_path = manifest.image_model();
        let image_plan = tract_onnx::onnx()
            .model_for_path(&image_path)
            .and_then(|m| m.with_input_fact(0, f32::fact([1, 3, r, r]).into()))
            .and_then(|m| m.into_optimized())
            .and_then(|m| m.into_runnable())
            .map_err(|e| backend_err(&format!("loading {}", image_path.display()), e))?;

        let text_path = manifest.text_model();
        let l = manifest.context_length;
        let mut text_model = tract_onnx::onnx()
            .model_for_path(&text_path)
            .map_err(|e| backend_err(&format!("loading {}", text_path.display()), e))?;
        let text_takes_mask = text_model
            .input_outlets()
            .map(|inputs| inputs.len() > 1)
            .unwrap_or(false);
        text_model = text_model
            .with_input_fact(0, i64::fact([1, l]).into())
            .map_err(|e| backend_err("text input", e))?;
        if text_takes_mask {
            text_model = text_model
                .with_input_fact(1, i64::fact([1, l]).into())
                .map_err(|e| backend_err("text mask input", e))?;
        }
        let text_plan = text_model
            .into_optimized()
            .and_then(|m| m.into_runnable())
            .map_err(|e| backend_err(&format!("optimizing {}", text_path.display()), e))?;

        let tok_path = manifest.tokenizer();
        let tokenizer = Tokenizer::from_file(&tok_path)
            .map_err(|e| backend_err(&format!("loading {}", tok_path.display()), e))?;

        Ok(Self {
            info: BackendInfo {
                name: manifest.name.clone(),
                dimension: manifest.dimension,
                input_resolution: r,
                has_analytic_gradient: false,
            },
            image_plan,
            text_plan,
            text_takes_mask,
            tokenizer,
            context_length: l,
            mean: manifest.image_mean,
            std: manifest.image_std,
        })
    }

    fn to_embedding(&self, outputs: TVec<TValue>) -> Result<EmbeddingVector> {
        let first = outputs
            .first()
            .ok_or_else(|| Error::Backend("model produced no outputs".into()))?;
        let view = first
            .to_plain_array_view::<f32>()
            .map_err(|e| backend_err("reading model output", e))?;
        let values: Vec<f64> = view.iter().map(|&v| f64::from(v)).collect();
        if values.len() != self.info.dimension {
            return Err(Error::Backend(format!(
                "model output has {} values, manifest declares {}",
                values.len(),
                self.info.dimension
            )));
        }
        EmbeddingVector::new(values)
    }
}

impl EmbeddingBackend for OnnxBackend {
    fn info(&self) -> &BackendInfo {
        &self.info
    }

    fn embed_image(&self, stimulus: &Stimulus) -> Result<EmbeddingVector> {
        let r = self.info.input_resolution;
        let resized = stimulus.resample_bilinear(r, r)?;
        let mut data = vec![0f32; 3 * r * r];
        for (i, p) in resized.pixels().iter().enumerate() {
            for c in 0..3 {
                data[c * r * r + i] = ((p[c] - self.mean[c]) / self.std[c]) as f32;
            }
        }
        let input = Tensor::from_shape(&[1, 3, r, r], &data).map_err(|e| backend_err("image tensor", e))?;
        let out = self
            .image_plan
            .run(tvec!(input.into()))
            .map_err(|e| backend_err("image encoder", e))?;
        self.to_embedding(out)
    }

    fn embed_text(&self, caption: &str) -> Result<EmbeddingVector> {
        if caption.is_empty() {
            return Err(Error::Input("caption must not be empty".into()));
        }
        let encoding = self
            .tokenizer
            .encode(caption, true)
            .map_err(|e| backend_err("tokenizing caption", e))?;
        let l = self.context_length;
        let mut ids = vec![0i64; l];
        let mut mask = vec![0i64; l];
        for (i, &id) in encoding.get_ids().iter().take(l).enumerate() {
            ids[i] = i64::from(id);
            mask[i] = 1;
        }
        let mut inputs: TVec<TValue> =
            tvec!(Tensor::from_shape(&[1, l], &ids).map_err(|e| backend_err("token tensor", e))?.into());
        if self.text_takes_mask {
            inputs.push(Tensor::from_shape(&[1, l], &mask).map_err(|e| backend_err("mask tensor", e))?.into());
        }
        let out = self.text_plan.run(inputs).map_err(|e| backend_err("text encoder", e))?;
        self.to_embedding(out)
    }
}
