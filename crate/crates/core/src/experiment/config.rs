use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::DEFAULT_CENTER_SIGMA_FRAC;
use crate::embedding::{EmbeddingBackend, SyntheticBackend};
use crate::error::{Error, Result};
use crate::metrics::{DEFAULT_GRID, DEFAULT_K_MAX};
use crate::model::{EngineParams, DEFAULT_PIXELS_PER_DEGREE};

/// A run configuration, read from TOML.
///
/// ```toml
/// seed = 7
/// output_dir = "runs"
///
/// [data]
/// images = "images"
/// observations = "capmit1003.jsonl"
/// eyetrack = "mit1003_fixations.csv"
///
/// [backend]
/// kind = "synthetic"
/// grid = 8
///
/// [[models]]
/// name = "random"
/// kind = "random"
///
/// [[models]]
/// name = "nevaclip-correct"
/// kind = "nevaclip"
/// variant = "correct_caption"
/// [models.params]
/// sigma_xi = 35.0
/// ```
///
/// Relative paths are resolved against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 uses one per core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub save_traces: bool,
    pub data: DataConfig,
    pub backend: BackendConfig,
    #[serde(default)]
    pub metric: MetricConfig,
    pub models: Vec<ModelConfig>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Directory holding `<image_id>` or `<image_id>.{png,jpg,jpeg}`.
    pub images: PathBuf,
    /// Click observations; drive generation and form the first evaluation set.
    pub observations: PathBuf,
    #[serde(default = "default_observations_name")]
    pub observations_name: String,
    /// Optional eye-tracking fixations, evaluated as a second set.
    #[serde(default)]
    pub eyetrack: Option<PathBuf>,
    #[serde(default = "default_eyetrack_name")]
    pub eyetrack_name: String,
}

fn default_observations_name() -> String {
    "capmit1003".into()
}

fn default_eyetrack_name() -> String {
    "mit1003".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    Synthetic {
        #[serde(default = "default_synthetic_grid")]
        grid: usize,
    },
    Onnx {
        manifest: PathBuf,
    },
}

fn default_synthetic_grid() -> usize {
    8
}

impl BackendConfig {
    pub fn build(&self) -> Result<Box<dyn EmbeddingBackend>> {
        match self {
            BackendConfig::Synthetic { grid } => Ok(Box::new(SyntheticBackend::new(*grid)?)),
            #[cfg(feature = "onnx")]
            BackendConfig::Onnx { manifest } => crate::embedding::load_backend(manifest),
            #[cfg(not(feature = "onnx"))]
            BackendConfig::Onnx { .. } => Err(Error::Config(
                "this build has no ONNX support; enable the `onnx` feature".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    #[serde(default = "default_grid")]
    pub grid: (usize, usize),
    #[serde(default = "default_k_max")]
    pub k_max: usize,
}

fn default_grid() -> (usize, usize) {
    DEFAULT_GRID
}

fn default_k_max() -> usize {
    DEFAULT_K_MAX
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            grid: DEFAULT_GRID,
            k_max: DEFAULT_K_MAX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetVariant {
    CorrectCaption,
    DifferentCaptionSameImage,
    DifferentCaptionDifferentImage,
    VisuallyGuided,
}

impl TargetVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            TargetVariant::CorrectCaption => "correct_caption",
            TargetVariant::DifferentCaptionSameImage => "different_caption_same_image",
            TargetVariant::DifferentCaptionDifferentImage => "different_caption_different_image",
            TargetVariant::VisuallyGuided => "visually_guided",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    #[serde(flatten)]
    pub kind: ModelKind,
}

fn default_n_fixations() -> usize {
    10
}

fn default_sigma_frac() -> f64 {
    DEFAULT_CENTER_SIGMA_FRAC
}

fn default_ior_radius() -> f64 {
    DEFAULT_PIXELS_PER_DEGREE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Random {
        #[serde(default = "default_n_fixations")]
        n_fixations: usize,
    },
    Center {
        #[serde(default = "default_n_fixations")]
        n_fixations: usize,
        #[serde(default = "default_sigma_frac")]
        sigma_frac: f64,
        /// Replaces the parametric Gaussian when set.
        #[serde(default)]
        density: Option<PathBuf>,
    },
    /// Samples from a click density: the given file, or a KDE over all kept
    /// observation clicks.
    ClicksDensity {
        #[serde(default = "default_n_fixations")]
        n_fixations: usize,
        #[serde(default)]
        density: Option<PathBuf>,
    },
    Wta {
        #[serde(default = "default_n_fixations")]
        n_fixations: usize,
        /// Directory of per-image saliency maps named `<image_id>.json` or
        /// `<image_id>.png`.
        saliency_dir: PathBuf,
        #[serde(default = "default_ior_radius")]
        ior_radius: f64,
    },
    Nevaclip {
        variant: TargetVariant,
        #[serde(default)]
        params: EngineParams,
    },
}

impl ExperimentConfig {
    /// Reads a TOML config, or the config embedded in a run manifest
    /// (`manifest.json`), and resolves relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config: ExperimentConfig = if path.extension().is_some_and(|e| e == "json") {
            let manifest: serde_json::Value = serde_json::from_str(&text)?;
            let inner = manifest
                .get("config")
                .ok_or_else(|| Error::Config(format!("{} has no `config` entry", path.display())))?;
            serde_json::from_value(inner.clone())?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        fix(&mut self.data.images);
        fix(&mut self.data.observations);
        if let Some(p) = self.data.eyetrack.as_mut() {
            fix(p);
        }
        if let BackendConfig::Onnx { manifest } = &mut self.backend {
            fix(manifest);
        }
        for m in &mut self.models {
            match &mut m.kind {
                ModelKind::Center { density: Some(p), .. } | ModelKind::ClicksDensity { density: Some(p), .. } => fix(p),
                ModelKind::Wta { saliency_dir, .. } => fix(saliency_dir),
                _ => {}
            }
        }
    }

    /// Checks names, parameters and that every referenced path exists.
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("config lists no models".into()));
        }
        let mut names = BTreeSet::new();
        for m in &self.models {
            if m.name.is_empty() || m.name.contains(['/', '\\']) {
                return Err(Error::Config(format!("invalid model name {:?}", m.name)));
            }
            if !names.insert(m.name.as_str()) {
                return Err(Error::Config(format!("duplicate model name {:?}", m.name)));
            }
            let n = match &m.kind {
                ModelKind::Random { n_fixations }
                | ModelKind::Center { n_fixations, .. }
                | ModelKind::ClicksDensity { n_fixations, .. }
                | ModelKind::Wta { n_fixations, .. } => *n_fixations,
                ModelKind::Nevaclip { params, .. } => {
                    params.validate()?;
                    params.n_fixations
                }
            };
            if n == 0 {
                return Err(Error::Config(format!("model {} generates no fixations", m.name)));
            }
            match &m.kind {
                ModelKind::Center { density: Some(p), .. } | ModelKind::ClicksDensity { density: Some(p), .. } => {
                    require_file(p)?;
                }
                ModelKind::Wta { saliency_dir, .. } => require_dir(saliency_dir)?,
                _ => {}
            }
        }
        if self.metric.grid.0 == 0 || self.metric.grid.1 == 0 || self.metric.k_max == 0 {
            return Err(Error::Config("metric grid and k_max must be positive".into()));
        }
        if self.data.observations_name == self.data.eyetrack_name && self.data.eyetrack.is_some() {
            return Err(Error::Config("dataset names must differ".into()));
        }
        require_dir(&self.data.images)?;
        require_file(&self.data.observations)?;
        if let Some(p) = &self.data.eyetrack {
            require_file(p)?;
        }
        if let BackendConfig::Onnx { manifest } = &self.backend {
            require_file(manifest)?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the resolved config.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
    }
}

fn require_file(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("missing file {}", p.display())))
    }
}

fn require_dir(p: &Path) -> Result<()> {
    if p.is_dir() {
        Ok(())
    } else {
        Err(Error::Config(format!("missing directory {}", p.display())))
    }
}
