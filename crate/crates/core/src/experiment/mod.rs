//! Configuration-driven experiments: generate scanpaths for every model,
//! score them against human references and write tables, curves and figures.
//!
//! A run directory holds
//!
//! - `scanpaths/<model>.jsonl`: one [`SimRecord`] per generated scanpath,
//!   ordered by image id then session id;
//! - `traces/<model>.jsonl` when `save_traces` is set;
//! - `spp_<dataset>.csv`: per-k and summary SPP rows for every model;
//! - `curves.csv`: the per-k rows of all datasets;
//! - `table.csv`: one summary row per (model, dataset);
//! - `manifest.json`: the resolved config, its hash, backend, target
//!   assignments and failures. Passing it back to [`run`] repeats the run.

mod config;
mod render;
mod targets;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{center_scanpath, density_scanpath, random_scanpath, wta_scanpath};
use crate::dataset::{apply_exclusions, click_density, load_eyetrack, load_observations, KdeOptions};
use crate::density::DensityMap;
use crate::embedding::{BackendInfo, EmbeddingBackend};
use crate::engine::{generate_with_target, resolve_target, OptimizationTrace};
use crate::error::{Error, Result};
use crate::foveation;
use crate::metrics::{quantize, spp_summary, write_report_csv, LabeledString, ReportRow, ScanpathString, SppReport};
use crate::model::{read_jsonl, write_jsonl, Observation, Scanpath, Stimulus, MAX_CLICKS};

pub use config::{BackendConfig, DataConfig, ExperimentConfig, MetricConfig, ModelConfig, ModelKind, TargetVariant};
pub use render::{render_overlay, OverlayStyle, DEFAULT_PALETTE};
pub use targets::{assign_targets, AssignedTarget, Assignment, SkippedAssignment};

/// Deterministic per-job seed derived from the run seed and job identity.
pub fn job_seed(seed: u64, model: &str, image_id: &str, session_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for part in [model, image_id, session_id] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// One generated scanpath and the observation it was generated for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub session_id: String,
    pub scanpath: Scanpath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub session_id: String,
    pub image_id: String,
    pub traces: Vec<OptimizationTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub model: String,
    pub image_id: String,
    pub session_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config_sha256: String,
    pub config: ExperimentConfig,
    pub backend: BackendInfo,
    /// Malformed observation lines, as `line N: message`.
    pub observation_errors: Vec<String>,
    pub assignments: BTreeMap<String, Vec<Assignment>>,
    pub skipped_assignments: BTreeMap<String, Vec<SkippedAssignment>>,
    pub failures: Vec<Failure>,
}

/// Finds `<dir>/<image_id>`, else `<dir>/<image_id>.{png,jpg,jpeg}`.
pub fn find_image(dir: &Path, image_id: &str) -> Option<PathBuf> {
    let exact = dir.join(image_id);
    if exact.is_file() {
        return Some(exact);
    }
    ["png", "jpg", "jpeg"]
        .iter()
        .map(|ext| dir.join(format!("{image_id}.{ext}")))
        .find(|p| p.is_file())
}

fn find_map(dir: &Path, image_id: &str) -> Option<PathBuf> {
    ["json", "png"]
        .iter()
        .map(|ext| dir.join(format!("{image_id}.{ext}")))
        .find(|p| p.is_file())
}

/// Inputs shared by generation and evaluation.
struct Inputs {
    kept: Vec<Observation>,
    observation_errors: Vec<String>,
    eyetrack: Option<Vec<Scanpath>>,
    sizes: HashMap<String, (usize, usize)>,
}

fn load_inputs(config: &ExperimentConfig) -> Result<Inputs> {
    let (obs, errors) = load_observations(&config.data.observations)?;
    for e in &errors {
        warn!("{}: line {}: {}", config.data.observations.display(), e.line, e.message);
    }
    let (kept, report) = apply_exclusions(&obs);
    info!(
        "{} observations, {} kept ({} skipped, {} without clicks, {} short captions)",
        obs.len(),
        kept.len(),
        report.skipped,
        report.no_clicks,
        report.short_caption
    );
    let eyetrack = config.data.eyetrack.as_deref().map(load_eyetrack).transpose()?;
    let mut ids: BTreeSet<&str> = kept.iter().map(|o| o.image_id.as_str()).collect();
    if let Some(et) = &eyetrack {
        ids.extend(et.iter().map(|s| s.image_id.as_str()));
    }
    let mut sizes = HashMap::new();
    for id in ids {
        let Some(path) = find_image(&config.data.images, id) else {
            warn!("image {id} not found in {}", config.data.images.display());
            continue;
        };
        match image::image_dimensions(&path) {
            Ok((w, h)) => {
                sizes.insert(id.to_string(), (w as usize, h as usize));
            }
            Err(e) => warn!("cannot read {}: {e}", path.display()),
        }
    }
    Ok(Inputs {
        kept,
        observation_errors: errors.iter().map(|e| format!("line {}: {}", e.line, e.message)).collect(),
        eyetrack,
        sizes,
    })
}

/// Per-model state prepared once before the jobs run.
enum Prepared {
    Random { n: usize },
    Center { n: usize, sigma_frac: f64, density: Option<DensityMap> },
    Density { n: usize, density: DensityMap },
    Wta { n: usize, dir: PathBuf, radius: f64 },
    Nevaclip { params: crate::model::EngineParams },
}

fn prepare(model: &ModelConfig, inputs: &Inputs) -> Result<Prepared> {
    Ok(match &model.kind {
        ModelKind::Random { n_fixations } => Prepared::Random { n: *n_fixations },
        ModelKind::Center {
            n_fixations,
            sigma_frac,
            density,
        } => Prepared::Center {
            n: *n_fixations,
            sigma_frac: *sigma_frac,
            density: density.as_deref().map(DensityMap::load).transpose()?,
        },
        ModelKind::ClicksDensity { n_fixations, density } => {
            let density = match density {
                Some(p) => DensityMap::load(p)?,
                None => {
                    let usable: Vec<Observation> = inputs
                        .kept
                        .iter()
                        .filter(|o| inputs.sizes.contains_key(&o.image_id))
                        .cloned()
                        .collect();
                    click_density(&usable, &inputs.sizes, &KdeOptions::default())
                        .map_err(|e| Error::Config(format!("model {}: click density: {e}", model.name)))?
                }
            };
            Prepared::Density {
                n: *n_fixations,
                density,
            }
        }
        ModelKind::Wta {
            n_fixations,
            saliency_dir,
            ior_radius,
        } => Prepared::Wta {
            n: *n_fixations,
            dir: saliency_dir.clone(),
            radius: *ior_radius,
        },
        ModelKind::Nevaclip { params, .. } => Prepared::Nevaclip { params: params.clone() },
    })
}

struct Job {
    model: usize,
    session_id: String,
    image_id: String,
    target: Option<AssignedTarget>,
}

type JobOutput = std::result::Result<(SimRecord, Option<Vec<OptimizationTrace>>), Failure>;

struct ImageContext<'a> {
    image_id: &'a str,
    size: Option<(usize, usize)>,
    path: Option<PathBuf>,
    clean: Option<Stimulus>,
    coarse: Vec<(f64, Stimulus)>,
}

impl ImageContext<'_> {
    fn size(&self) -> Result<(usize, usize)> {
        self.size
            .ok_or_else(|| Error::Input(format!("image {} not available", self.image_id)))
    }

    fn clean(&mut self) -> Result<&Stimulus> {
        if self.clean.is_none() {
            let path = self
                .path
                .as_ref()
                .ok_or_else(|| Error::Input(format!("image {} not available", self.image_id)))?;
            self.clean = Some(Stimulus::load(path, self.image_id)?);
        }
        Ok(self.clean.as_ref().expect("just loaded"))
    }

    fn coarse(&mut self, blur_sigma: f64) -> Result<Stimulus> {
        if let Some((_, c)) = self.coarse.iter().find(|(s, _)| *s == blur_sigma) {
            return Ok(c.clone());
        }
        let c = foveation::coarse(self.clean()?, blur_sigma)?;
        self.coarse.push((blur_sigma, c.clone()));
        Ok(c)
    }
}

fn run_job(
    job: &Job,
    ctx: &mut ImageContext<'_>,
    config: &ExperimentConfig,
    prepared: &[Prepared],
    backend: &dyn EmbeddingBackend,
) -> Result<(Scanpath, Option<Vec<OptimizationTrace>>)> {
    let name = config.models[job.model].name.as_str();
    let seed = job_seed(config.seed, name, &job.image_id, &job.session_id);
    let tag = |mut sp: Scanpath| {
        sp.model_tag = name.to_string();
        sp.image_id = job.image_id.clone();
        sp
    };
    match &prepared[job.model] {
        Prepared::Random { n } => {
            let (w, h) = ctx.size()?;
            Ok((tag(random_scanpath(w, h, *n, seed)?), None))
        }
        Prepared::Center { n, sigma_frac, density } => {
            let (w, h) = ctx.size()?;
            let sp = match density {
                Some(d) => density_scanpath(d, w, h, *n, seed)?,
                None => center_scanpath(w, h, *n, seed, *sigma_frac)?,
            };
            Ok((tag(sp), None))
        }
        Prepared::Density { n, density } => {
            let (w, h) = ctx.size()?;
            Ok((tag(density_scanpath(density, w, h, *n, seed)?), None))
        }
        Prepared::Wta { n, dir, radius } => {
            let (w, h) = ctx.size()?;
            let path = find_map(dir, &job.image_id)
                .ok_or_else(|| Error::Input(format!("no saliency map for {}", job.image_id)))?;
            let saliency = DensityMap::load(&path)?;
            Ok((tag(wta_scanpath(&saliency, w, h, *n, *radius)?.scanpath), None))
        }
        Prepared::Nevaclip { params } => {
            let assigned = job
                .target
                .as_ref()
                .ok_or_else(|| Error::Input("nevaclip job without a target".into()))?;
            let coarse = ctx.coarse(params.blur_sigma)?;
            let clean = ctx.clean()?;
            let target = resolve_target(backend, &assigned.to_spec(clean))?;
            let (sp, traces) = generate_with_target(clean, &coarse, &target, params, backend, name)?;
            Ok((tag(sp), config.save_traces.then_some(traces)))
        }
    }
}

fn unique_run_dir(base: &Path) -> PathBuf {
    let stamp = chrono::Utc::now().format("run-%Y%m%dT%H%M%SZ").to_string();
    let mut dir = base.join(&stamp);
    let mut n = 2;
    while dir.exists() {
        dir = base.join(format!("{stamp}-{n}"));
        n += 1;
    }
    dir
}

/// Runs an experiment and returns its output directory: `out` when given,
/// otherwise a fresh timestamped directory under `config.output_dir`.
///
/// Config and backend problems fail the run before any work starts.
/// Per-image failures are logged, recorded in the manifest and skipped.
pub fn run(config: &ExperimentConfig, out: Option<&Path>) -> Result<PathBuf> {
    config.validate()?;
    let backend = config.backend.build()?;
    let inputs = load_inputs(config)?;
    let prepared = config
        .models
        .iter()
        .map(|m| prepare(m, &inputs))
        .collect::<Result<Vec<_>>>()?;

    let mut assignments = BTreeMap::new();
    let mut skipped_assignments = BTreeMap::new();
    let mut jobs = Vec::new();
    for (mi, model) in config.models.iter().enumerate() {
        if let ModelKind::Nevaclip { variant, .. } = &model.kind {
            let (assigned, skipped) = assign_targets(&inputs.kept, *variant, config.seed);
            for s in &skipped {
                warn!("model {}: {} / {}: {}", model.name, s.image_id, s.session_id, s.reason);
            }
            jobs.extend(assigned.iter().map(|a| Job {
                model: mi,
                session_id: a.session_id.clone(),
                image_id: a.image_id.clone(),
                target: Some(a.target.clone()),
            }));
            assignments.insert(model.name.clone(), assigned);
            skipped_assignments.insert(model.name.clone(), skipped);
        } else {
            jobs.extend(inputs.kept.iter().map(|o| Job {
                model: mi,
                session_id: o.session_id.clone(),
                image_id: o.image_id.clone(),
                target: None,
            }));
        }
    }

    // Jobs are grouped by image so each image is decoded and blurred once.
    let mut by_image: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, j) in jobs.iter().enumerate() {
        by_image.entry(j.image_id.as_str()).or_default().push(i);
    }
    let groups: Vec<(&str, Vec<usize>)> = by_image.into_iter().collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let backend_ref: &dyn EmbeddingBackend = backend.as_ref();
    let results: Vec<Vec<(usize, JobOutput)>> = pool.install(|| {
        groups
            .par_iter()
            .map(|(image_id, idxs)| {
                let mut ctx = ImageContext {
                    image_id,
                    size: inputs.sizes.get(*image_id).copied(),
                    path: find_image(&config.data.images, image_id),
                    clean: None,
                    coarse: Vec::new(),
                };
                idxs.iter()
                    .map(|&i| {
                        let job = &jobs[i];
                        let out = run_job(job, &mut ctx, config, &prepared, backend_ref)
                            .map(|(scanpath, traces)| {
                                (
                                    SimRecord {
                                        session_id: job.session_id.clone(),
                                        scanpath,
                                    },
                                    traces,
                                )
                            })
                            .map_err(|e| Failure {
                                model: config.models[job.model].name.clone(),
                                image_id: job.image_id.clone(),
                                session_id: job.session_id.clone(),
                                message: e.to_string(),
                            });
                        (i, out)
                    })
                    .collect()
            })
            .collect()
    });

    let mut sims: Vec<Vec<SimRecord>> = vec![Vec::new(); config.models.len()];
    let mut traces: Vec<Vec<TraceRecord>> = vec![Vec::new(); config.models.len()];
    let mut failures = Vec::new();
    let mut flat: Vec<(usize, JobOutput)> = results.into_iter().flatten().collect();
    flat.sort_by(|a, b| {
        let (ja, jb) = (&jobs[a.0], &jobs[b.0]);
        (ja.model, &ja.image_id, &ja.session_id, a.0).cmp(&(jb.model, &jb.image_id, &jb.session_id, b.0))
    });
    for (i, out) in flat {
        let job = &jobs[i];
        match out {
            Ok((rec, tr)) => {
                if let Some(tr) = tr {
                    traces[job.model].push(TraceRecord {
                        session_id: job.session_id.clone(),
                        image_id: job.image_id.clone(),
                        traces: tr,
                    });
                }
                sims[job.model].push(rec);
            }
            Err(f) => {
                warn!("model {}: {} / {}: {}", f.model, f.image_id, f.session_id, f.message);
                failures.push(f);
            }
        }
    }

    let dir = match out {
        Some(p) => p.to_path_buf(),
        None => unique_run_dir(&config.output_dir),
    };
    fs::create_dir_all(dir.join("scanpaths"))?;
    for (model, recs) in config.models.iter().zip(&sims) {
        write_jsonl(&dir.join("scanpaths").join(format!("{}.jsonl", model.name)), recs)?;
    }
    if config.save_traces {
        fs::create_dir_all(dir.join("traces"))?;
        for (model, recs) in config.models.iter().zip(&traces) {
            if matches!(model.kind, ModelKind::Nevaclip { .. }) {
                write_jsonl(&dir.join("traces").join(format!("{}.jsonl", model.name)), recs)?;
            }
        }
    }
    write_reports(&dir, config, &inputs, &sims)?;
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: config.hash()?,
        config: config.clone(),
        backend: backend.info().clone(),
        observation_errors: inputs.observation_errors,
        assignments,
        skipped_assignments,
        failures,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    info!("run written to {}", dir.display());
    Ok(dir)
}

/// Human references per evaluation dataset, quantized and truncated to
/// ten fixations.
fn references(config: &ExperimentConfig, inputs: &Inputs) -> Result<Vec<(String, BTreeMap<String, Vec<ScanpathString>>)>> {
    let (gx, gy) = config.metric.grid;
    let quantize_all = |paths: &mut dyn Iterator<Item = Scanpath>| -> Result<BTreeMap<String, Vec<ScanpathString>>> {
        let mut out: BTreeMap<String, Vec<ScanpathString>> = BTreeMap::new();
        for sp in paths {
            let Some(&(w, h)) = inputs.sizes.get(&sp.image_id) else {
                continue;
            };
            if sp.is_empty() {
                continue;
            }
            let q = quantize(&sp.truncated(MAX_CLICKS), w, h, gx, gy)?;
            out.entry(sp.image_id).or_default().push(q);
        }
        Ok(out)
    };
    let mut sets = vec![(
        config.data.observations_name.clone(),
        quantize_all(&mut inputs.kept.iter().map(Observation::click_scanpath))?,
    )];
    if let Some(et) = &inputs.eyetrack {
        sets.push((config.data.eyetrack_name.clone(), quantize_all(&mut et.iter().cloned())?));
    }
    Ok(sets)
}

fn write_reports(dir: &Path, config: &ExperimentConfig, inputs: &Inputs, sims: &[Vec<SimRecord>]) -> Result<()> {
    let (gx, gy) = config.metric.grid;
    let sets = references(config, inputs)?;
    let mut labeled: Vec<Vec<LabeledString>> = Vec::with_capacity(sims.len());
    for recs in sims {
        let mut v = Vec::with_capacity(recs.len());
        for r in recs {
            if let Some(&(w, h)) = inputs.sizes.get(&r.scanpath.image_id) {
                v.push(LabeledString {
                    image_id: r.scanpath.image_id.clone(),
                    string: quantize(&r.scanpath, w, h, gx, gy)?,
                });
            }
        }
        labeled.push(v);
    }

    let mut reports: Vec<(String, String, Option<SppReport>)> = Vec::new();
    for (dataset, humans) in &sets {
        for (model, strings) in config.models.iter().zip(&labeled) {
            let report = match spp_summary(strings, humans, config.metric.k_max) {
                Ok(r) => Some(r),
                Err(e) => {
                    warn!("model {} on {dataset}: {e}", model.name);
                    None
                }
            };
            reports.push((model.name.clone(), dataset.clone(), report));
        }
    }

    let rows_for = |pred: &dyn Fn(&str) -> bool| -> Vec<ReportRow<'_>> {
        reports
            .iter()
            .filter(|(_, d, _)| pred(d))
            .filter_map(|(m, d, r)| {
                r.as_ref().map(|report| ReportRow {
                    model: m,
                    dataset: d,
                    report,
                })
            })
            .collect()
    };
    for (dataset, _) in &sets {
        let rows = rows_for(&|d| d == dataset);
        write_report_csv(fs::File::create(dir.join(format!("spp_{dataset}.csv")))?, &rows)?;
    }

    let mut curves = csv::Writer::from_path(dir.join("curves.csv")).map_err(crate::metrics::csv_err)?;
    curves
        .write_record(["model", "dataset", "k", "mean", "std", "count"])
        .map_err(crate::metrics::csv_err)?;
    for row in rows_for(&|_| true) {
        for (k, s) in &row.report.per_k {
            curves
                .write_record([
                    row.model,
                    row.dataset,
                    &k.to_string(),
                    &s.mean.to_string(),
                    &s.std.to_string(),
                    &s.count.to_string(),
                ])
                .map_err(crate::metrics::csv_err)?;
        }
    }
    curves.flush()?;

    let mut table = csv::Writer::from_path(dir.join("table.csv")).map_err(crate::metrics::csv_err)?;
    table
        .write_record(["model", "dataset", "spp_mean", "spp_std", "scanpaths", "missing"])
        .map_err(crate::metrics::csv_err)?;
    for (m, d, r) in &reports {
        let (mean, std, n, missing) = match r {
            Some(r) => (
                r.summary.mean.to_string(),
                r.summary.std.to_string(),
                r.per_k.get(&1).map_or(0, |s| s.count),
                r.missing.len(),
            ),
            None => ("NaN".into(), "NaN".into(), 0, 0),
        };
        table
            .write_record([m.as_str(), d.as_str(), &mean, &std, &n.to_string(), &missing.to_string()])
            .map_err(crate::metrics::csv_err)?;
    }
    table.flush()?;
    Ok(())
}

pub fn read_manifest(run_dir: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(run_dir.join("manifest.json"))?;
    Ok(serde_json::from_str(&text)?)
}

/// Reads the scanpaths of every model of a run, in config order.
pub fn read_scanpaths(run_dir: &Path, manifest: &RunManifest) -> Result<Vec<(String, Vec<SimRecord>)>> {
    manifest
        .config
        .models
        .iter()
        .map(|m| {
            let path = run_dir.join("scanpaths").join(format!("{}.jsonl", m.name));
            let (recs, errors) = read_jsonl::<SimRecord>(&path)?;
            if let Some(e) = errors.first() {
                return Err(Error::Parse {
                    path,
                    line: e.line,
                    message: e.message.clone(),
                });
            }
            Ok((m.name.clone(), recs))
        })
        .collect()
}

/// Recomputes the SPP reports of an existing run from its scanpath files.
pub fn evaluate(run_dir: &Path) -> Result<()> {
    let manifest = read_manifest(run_dir)?;
    let inputs = load_inputs(&manifest.config)?;
    let sims: Vec<Vec<SimRecord>> = read_scanpaths(run_dir, &manifest)?.into_iter().map(|(_, r)| r).collect();
    write_reports(run_dir, &manifest.config, &inputs, &sims)
}

/// Renders every scanpath generated for `image_id` in a run, one color per
/// scanpath, and writes `figures/<image_id>.png`. With `models` set, only
/// those models are drawn.
pub fn render_run(run_dir: &Path, image_id: &str, models: Option<&[String]>, style: &OverlayStyle) -> Result<PathBuf> {
    let manifest = read_manifest(run_dir)?;
    let path = find_image(&manifest.config.data.images, image_id)
        .ok_or_else(|| Error::Input(format!("image {image_id} not found")))?;
    let stimulus = Stimulus::load(&path, image_id)?;
    let mut paths = Vec::new();
    for (model, recs) in read_scanpaths(run_dir, &manifest)? {
        if models.is_some_and(|m| !m.contains(&model)) {
            continue;
        }
        paths.extend(recs.into_iter().filter(|r| r.scanpath.image_id == image_id).map(|r| r.scanpath));
    }
    if paths.is_empty() {
        return Err(Error::Input(format!("run has no scanpaths for {image_id}")));
    }
    let img = render_overlay(&stimulus, &paths, style);
    let dir = run_dir.join("figures");
    fs::create_dir_all(&dir)?;
    let out = dir.join(format!("{}.png", Path::new(image_id).file_stem().and_then(|s| s.to_str()).unwrap_or(image_id)));
    img.save(&out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn job_seeds_are_stable_and_distinct() {
        assert_eq!(job_seed(1, "m", "i", "s"), job_seed(1, "m", "i", "s"));
        assert_ne!(job_seed(1, "m", "i", "s"), job_seed(2, "m", "i", "s"));
        // Length prefixes keep field boundaries apart.
        assert_ne!(job_seed(1, "ab", "c", "s"), job_seed(1, "a", "bc", "s"));
    }
}
