//! Python bindings for scanlab-core.
//!
//! Images cross the boundary as nested lists of RGB triples in `[0, 1]`,
//! masks and embeddings as flat lists, and scanpaths as lists of
//! [`PyFixation`]. Structured results (traces, dataset summaries,
//! observations) are returned as plain dicts.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use scanlab_core::embedding::{EmbeddingBackend, EmbeddingVector, SyntheticBackend};
use scanlab_core::engine::{self, TargetSpec};
use scanlab_core::{baselines, dataset, foveation, metrics};
use scanlab_core::{EngineParams, Fixation, Scanpath, ScanpathSource, Stimulus};

pyo3::create_exception!(scanlab, ScanlabError, PyValueError);

fn err(e: scanlab_core::Error) -> PyErr {
    match e {
        scanlab_core::Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => ScanlabError::new_err(other.to_string()),
    }
}

/// Converts any serializable value into the equivalent Python object.
fn to_py<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| ScanlabError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

#[pyclass(name = "Fixation", module = "scanlab", from_py_object)]
#[derive(Clone, Copy)]
struct PyFixation {
    #[pyo3(get, set)]
    x: f64,
    #[pyo3(get, set)]
    y: f64,
    #[pyo3(get, set)]
    t_ms: Option<f64>,
}

#[pymethods]
impl PyFixation {
    #[new]
    #[pyo3(signature = (x, y, t_ms=None))]
    fn new(x: f64, y: f64, t_ms: Option<f64>) -> Self {
        Self { x, y, t_ms }
    }

    fn __repr__(&self) -> String {
        match self.t_ms {
            Some(t) => format!("Fixation(x={}, y={}, t_ms={t})", self.x, self.y),
            None => format!("Fixation(x={}, y={})", self.x, self.y),
        }
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.x == other.x && self.y == other.y && self.t_ms == other.t_ms
    }
}

impl From<Fixation> for PyFixation {
    fn from(f: Fixation) -> Self {
        Self { x: f.x, y: f.y, t_ms: f.t_ms }
    }
}

impl From<PyFixation> for Fixation {
    fn from(f: PyFixation) -> Self {
        Fixation { x: f.x, y: f.y, t_ms: f.t_ms }
    }
}

fn fixations_of(sp: &Scanpath) -> Vec<PyFixation> {
    sp.fixations.iter().copied().map(PyFixation::from).collect()
}

#[pyclass(name = "Stimulus", module = "scanlab", frozen)]
struct PyStimulus {
    inner: Stimulus,
}

#[pymethods]
impl PyStimulus {
    /// `pixels` is row-major, one `(r, g, b)` triple per pixel.
    #[new]
    #[pyo3(signature = (width, height, pixels, image_id="stimulus"))]
    fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>, image_id: &str) -> PyResult<Self> {
        Ok(Self { inner: Stimulus::new(image_id, width, height, pixels).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (width, height, gray, image_id="stimulus"))]
    fn from_gray(width: usize, height: usize, gray: Vec<f64>, image_id: &str) -> PyResult<Self> {
        Ok(Self { inner: Stimulus::from_gray(image_id, width, height, &gray).map_err(err)? })
    }

    /// Loads an image file; the id defaults to the file name.
    #[staticmethod]
    #[pyo3(signature = (path, image_id=None))]
    fn load(path: PathBuf, image_id: Option<String>) -> PyResult<Self> {
        let id = image_id.unwrap_or_else(|| {
            path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
        });
        Ok(Self { inner: Stimulus::load(&path, id).map_err(err)? })
    }

    #[getter]
    fn image_id(&self) -> &str {
        &self.inner.image_id
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    fn pixel(&self, x: usize, y: usize) -> PyResult<[f64; 3]> {
        if x >= self.inner.width() || y >= self.inner.height() {
            return Err(err(scanlab_core::Error::Bounds {
                x: x as f64,
                y: y as f64,
                width: self.inner.width(),
                height: self.inner.height(),
            }));
        }
        Ok(self.inner.pixel(x, y))
    }

    fn pixels(&self) -> Vec<[f64; 3]> {
        self.inner.pixels().to_vec()
    }

    fn gray(&self) -> Vec<f64> {
        self.inner.gray()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner
            .to_rgb8()
            .save(&path)
            .map_err(|e| err(scanlab_core::Error::Image(e)))
    }

    fn __repr__(&self) -> String {
        format!("Stimulus({:?}, {}x{})", self.inner.image_id, self.inner.width(), self.inner.height())
    }
}

#[pyclass(name = "EngineParams", module = "scanlab", from_py_object)]
#[derive(Clone)]
struct PyEngineParams {
    inner: EngineParams,
}

#[pymethods]
impl PyEngineParams {
    /// Unspecified fields take the engine defaults.
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut fields = serde_json::to_value(EngineParams::default()).map_err(|e| ScanlabError::new_err(e.to_string()))?;
        for (key, value) in kwargs.into_iter().flatten() {
            let key: String = key.extract()?;
            let slot = fields
                .get_mut(&key)
                .ok_or_else(|| ScanlabError::new_err(format!("unknown engine parameter {key:?}")))?;
            *slot = if slot.is_boolean() {
                value.extract::<bool>()?.into()
            } else if slot.is_u64() {
                value.extract::<u64>()?.into()
            } else {
                value.extract::<f64>()?.into()
            };
        }
        let params: EngineParams = serde_json::from_value(fields).map_err(|e| ScanlabError::new_err(e.to_string()))?;
        params.validate().map_err(err)?;
        Ok(Self { inner: params })
    }

    #[getter]
    fn n_fixations(&self) -> usize {
        self.inner.n_fixations
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn sigma_xi(&self) -> f64 {
        self.inner.sigma_xi
    }

    #[getter]
    fn blur_sigma(&self) -> f64 {
        self.inner.blur_sigma
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    #[getter]
    fn grad_step(&self) -> f64 {
        self.inner.grad_step
    }

    #[getter]
    fn seed_center(&self) -> bool {
        self.inner.seed_center
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

#[pyclass(name = "Backend", module = "scanlab", frozen)]
struct PyBackend {
    inner: Box<dyn EmbeddingBackend>,
}

#[pymethods]
impl PyBackend {
    /// Closed-form encoder: the `grid x grid` block average of the gray image.
    #[staticmethod]
    #[pyo3(signature = (grid=8))]
    fn synthetic(grid: usize) -> PyResult<Self> {
        Ok(Self { inner: Box::new(SyntheticBackend::new(grid).map_err(err)?) })
    }

    /// Pretrained ONNX image and text encoders described by a manifest.
    #[cfg(feature = "onnx")]
    #[staticmethod]
    fn from_manifest(path: PathBuf) -> PyResult<Self> {
        use scanlab_core::embedding::{BackendManifest, OnnxBackend};
        let manifest = BackendManifest::load(&path).map_err(err)?;
        Ok(Self { inner: Box::new(OnnxBackend::from_manifest(&manifest).map_err(err)?) })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.info().name.clone()
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.info().dimension
    }

    fn embed_image(&self, py: Python<'_>, stimulus: &PyStimulus) -> PyResult<Vec<f64>> {
        let e = py.detach(|| self.inner.embed_image(&stimulus.inner)).map_err(err)?;
        Ok(e.values().to_vec())
    }

    fn embed_text(&self, py: Python<'_>, caption: &str) -> PyResult<Vec<f64>> {
        let e = py.detach(|| self.inner.embed_text(caption)).map_err(err)?;
        Ok(e.values().to_vec())
    }

    fn __repr__(&self) -> String {
        format!("Backend({:?})", self.inner.info().name)
    }
}

/// Peak-one Gaussian foveation mask, row-major.
#[pyfunction]
fn gaussian_blob(x: f64, y: f64, sigma_xi: f64, width: usize, height: usize) -> PyResult<Vec<f64>> {
    let mask = foveation::gaussian_blob(&Fixation::new(x, y), sigma_xi, width, height).map_err(err)?;
    Ok(mask.values().to_vec())
}

/// The blurred version of a stimulus used for the periphery.
#[pyfunction]
fn coarse(stimulus: &PyStimulus, blur_sigma: f64) -> PyResult<PyStimulus> {
    Ok(PyStimulus { inner: foveation::coarse(&stimulus.inner, blur_sigma).map_err(err)? })
}

/// Per-pixel blend `mask * clean + (1 - mask) * coarse`.
#[pyfunction]
fn foveate(clean: &PyStimulus, coarse: &PyStimulus, mask: Vec<f64>) -> PyResult<PyStimulus> {
    let (w, h) = clean.inner.dimensions();
    let mask = foveation::FoveationMask::from_values(w, h, mask).map_err(err)?;
    let out = foveation::foveate(&clean.inner, &coarse.inner, &mask).map_err(err)?;
    Ok(PyStimulus { inner: out.stimulus })
}

/// Runs the gradient-driven generator.
///
/// Exactly one target is required: a caption, an explicit embedding, or
/// `visual=True` to align with the clean image. Returns the fixations and
/// one trace dict per fixation.
#[pyfunction]
#[pyo3(signature = (stimulus, backend, params=None, caption=None, target=None, visual=false))]
fn generate_scanpath(
    py: Python<'_>,
    stimulus: &PyStimulus,
    backend: &PyBackend,
    params: Option<PyEngineParams>,
    caption: Option<String>,
    target: Option<Vec<f64>>,
    visual: bool,
) -> PyResult<(Vec<PyFixation>, Py<PyAny>)> {
    let spec = match (caption, target, visual) {
        (Some(c), None, false) => TargetSpec::CaptionText(c),
        (None, Some(t), false) => TargetSpec::ExplicitVector(EmbeddingVector::new(t).map_err(err)?),
        (None, None, true) => TargetSpec::VisualCleanImage(stimulus.inner.clone()),
        _ => return Err(ScanlabError::new_err("give exactly one of caption, target or visual=True")),
    };
    let params = params.map(|p| p.inner).unwrap_or_default();
    let (sp, traces) = py
        .detach(|| engine::generate_scanpath(&stimulus.inner, &spec, &params, backend.inner.as_ref()))
        .map_err(err)?;
    Ok((fixations_of(&sp), to_py(py, &traces)?))
}

#[pyfunction]
fn random_scanpath(width: usize, height: usize, n: usize, seed: u64) -> PyResult<Vec<PyFixation>> {
    Ok(fixations_of(&baselines::random_scanpath(width, height, n, seed).map_err(err)?))
}

/// Fixations drawn from a centered Gaussian with standard deviation
/// `sigma_frac` times each image dimension.
#[pyfunction]
fn center_scanpath(width: usize, height: usize, n: usize, seed: u64, sigma_frac: f64) -> PyResult<Vec<PyFixation>> {
    Ok(fixations_of(&baselines::center_scanpath(width, height, n, seed, sigma_frac).map_err(err)?))
}

/// Grid cell labels, row-major, of each fixation.
#[pyfunction]
#[pyo3(signature = (fixations, width, height, grid=(8, 8)))]
fn quantize(fixations: Vec<PyFixation>, width: usize, height: usize, grid: (usize, usize)) -> PyResult<Vec<u32>> {
    let sp = Scanpath::new(
        "",
        fixations.into_iter().map(Fixation::from).collect(),
        ScanpathSource::Simulated,
        "",
    );
    Ok(metrics::quantize(&sp, width, height, grid.0, grid.1).map_err(err)?.symbols)
}

#[pyfunction]
fn edit_distance(a: Vec<u32>, b: Vec<u32>) -> usize {
    metrics::edit_distance(&a, &b)
}

fn string(symbols: Vec<u32>, grid: (usize, usize)) -> PyResult<metrics::ScanpathString> {
    metrics::ScanpathString::new(symbols, grid).map_err(err)
}

/// Windowed edit distance of two label strings, in `[0, 1]`.
#[pyfunction]
#[pyo3(signature = (a, b, k, grid=(8, 8)))]
fn sbtde(a: Vec<u32>, b: Vec<u32>, k: usize, grid: (usize, usize)) -> PyResult<f64> {
    metrics::sbtde_k(&string(a, grid)?, &string(b, grid)?, k).map_err(err)
}

/// Best `1 - sbtde` of `sim` against any human string at least `k` long.
#[pyfunction]
#[pyo3(signature = (sim, humans, k, grid=(8, 8)))]
fn spp(sim: Vec<u32>, humans: Vec<Vec<u32>>, k: usize, grid: (usize, usize)) -> PyResult<f64> {
    let humans = humans.into_iter().map(|h| string(h, grid)).collect::<PyResult<Vec<_>>>()?;
    metrics::spp_k(&string(sim, grid)?, &humans, k).map_err(err)
}

/// Reads a JSON-lines observation file; returns the observations and the
/// messages of any malformed lines.
#[pyfunction]
fn load_observations(py: Python<'_>, path: PathBuf) -> PyResult<(Py<PyAny>, Vec<String>)> {
    let (obs, bad) = dataset::load_observations(&path).map_err(err)?;
    let bad = bad.iter().map(|e| format!("line {}: {}", e.line, e.message)).collect();
    Ok((to_py(py, &obs)?, bad))
}

/// Dataset statistics of a JSON-lines observation file.
#[pyfunction]
fn summarize(py: Python<'_>, path: PathBuf) -> PyResult<Py<PyAny>> {
    let (obs, _) = dataset::load_observations(&path).map_err(err)?;
    to_py(py, &dataset::summarize(&obs).map_err(err)?)
}

#[pymodule]
fn scanlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ScanlabError", m.py().get_type::<ScanlabError>())?;
    m.add_class::<PyFixation>()?;
    m.add_class::<PyStimulus>()?;
    m.add_class::<PyEngineParams>()?;
    m.add_class::<PyBackend>()?;
    m.add_function(wrap_pyfunction!(gaussian_blob, m)?)?;
    m.add_function(wrap_pyfunction!(coarse, m)?)?;
    m.add_function(wrap_pyfunction!(foveate, m)?)?;
    m.add_function(wrap_pyfunction!(generate_scanpath, m)?)?;
    m.add_function(wrap_pyfunction!(random_scanpath, m)?)?;
    m.add_function(wrap_pyfunction!(center_scanpath, m)?)?;
    m.add_function(wrap_pyfunction!(quantize, m)?)?;
    m.add_function(wrap_pyfunction!(edit_distance, m)?)?;
    m.add_function(wrap_pyfunction!(sbtde, m)?)?;
    m.add_function(wrap_pyfunction!(spp, m)?)?;
    m.add_function(wrap_pyfunction!(load_observations, m)?)?;
    m.add_function(wrap_pyfunction!(summarize, m)?)?;
    Ok(())
}
