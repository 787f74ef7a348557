use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-channel normalization used by CLIP image encoders.
pub const CLIP_MEAN: [f64; 3] = [0.481_454_66, 0.457_827_5, 0.408_210_73];
pub const CLIP_STD: [f64; 3] = [0.268_629_54, 0.261_302_58, 0.275_777_11];

/// Describes a pretrained encoder pair on disk.
///
/// Relative model paths are resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendManifest {
    pub name: String,
    pub dimension: usize,
    pub input_resolution: usize,
    pub image_model_path: PathBuf,
    pub text_model_path: PathBuf,
    pub tokenizer_path: PathBuf,
    /// Token sequence length expected by the text encoder.
    #[serde(default = "default_context_length")]
    pub context_length: usize,
    #[serde(default = "default_mean")]
    pub image_mean: [f64; 3],
    #[serde(default = "default_std")]
    pub image_std: [f64; 3],
    #[serde(skip)]
    base_dir: PathBuf,
}

fn default_context_length() -> usize {
    77
}

fn default_mean() -> [f64; 3] {
    CLIP_MEAN
}

fn default_std() -> [f64; 3] {
    CLIP_STD
}

impl BackendManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Backend(format!("cannot read manifest {}: {e}", path.display())))?;
        let mut manifest: BackendManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Backend(format!("invalid manifest {}: {e}", path.display())))?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::Backend("manifest dimension must be at least 1".into()));
        }
        if self.input_resolution == 0 {
            return Err(Error::Backend("manifest input_resolution must be at least 1".into()));
        }
        if self.context_length == 0 {
            return Err(Error::Backend("manifest context_length must be at least 1".into()));
        }
        if self.image_std.iter().any(|s| *s <= 0.0) {
            return Err(Error::Backend("manifest image_std must be positive".into()));
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn image_model(&self) -> PathBuf {
        self.resolve(&self.image_model_path)
    }

    pub fn text_model(&self) -> PathBuf {
        self.resolve(&self.text_model_path)
    }

    pub fn tokenizer(&self) -> PathBuf {
        self.resolve(&self.tokenizer_path)
    }
}
