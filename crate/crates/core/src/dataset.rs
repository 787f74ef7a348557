//! Observation and fixation-record ingestion, exclusion rules and dataset
//! statistics.
//!
//! Observations are JSONL records
//! `{session_id, image_id, clicks: [{x, y, t_ms}], caption, skipped}`.
//! Eye-tracking fixations come as a CSV with the header
//! `image_id,subject,ordinal,x,y`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::density::DensityMap;
use crate::error::{Error, Result};
use crate::metrics::mean_std;
use crate::model::{write_jsonl, Fixation, LineError, Observation, Scanpath, ScanpathSource, MAX_CLICKS};

/// Captions shorter than this many characters are excluded.
pub const MIN_CAPTION_CHARS: usize = 3;

/// Default KDE evaluation grid.
pub const DEFAULT_DENSITY_GRID: (usize, usize) = (64, 64);

/// Smallest per-axis bandwidth, in normalized units. Used when the clicks
/// have no spread along an axis.
pub const MIN_BANDWIDTH: f64 = 0.02;

/// Reads observations, reporting malformed or invalid lines instead of
/// dropping them silently.
pub fn load_observations(path: &Path) -> Result<(Vec<Observation>, Vec<LineError>)> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message| LineError { line: idx + 1, message };
        match serde_json::from_str::<Observation>(line) {
            Ok(obs) if obs.clicks.len() > MAX_CLICKS => errors.push(err(format!(
                "{} clicks exceed the limit of {MAX_CLICKS}",
                obs.clicks.len()
            ))),
            Ok(obs) => records.push(obs),
            Err(e) => errors.push(err(e.to_string())),
        }
    }
    Ok((records, errors))
}

pub fn save_observations(path: &Path, obs: &[Observation]) -> Result<()> {
    write_jsonl(path, obs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    Skipped,
    NoClicks,
    ShortCaption,
}

/// First matching exclusion rule, in precedence order.
pub fn exclusion_reason(obs: &Observation) -> Option<ExclusionReason> {
    if obs.skipped {
        Some(ExclusionReason::Skipped)
    } else if obs.clicks.is_empty() {
        Some(ExclusionReason::NoClicks)
    } else if obs.caption.chars().count() < MIN_CAPTION_CHARS {
        Some(ExclusionReason::ShortCaption)
    } else {
        None
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub skipped: usize,
    pub no_clicks: usize,
    pub short_caption: usize,
}

impl ExclusionReport {
    pub fn total(&self) -> usize {
        self.skipped + self.no_clicks + self.short_caption
    }
}

pub fn apply_exclusions(obs: &[Observation]) -> (Vec<Observation>, ExclusionReport) {
    let mut report = ExclusionReport::default();
    let mut kept = Vec::new();
    for o in obs {
        match exclusion_reason(o) {
            None => kept.push(o.clone()),
            Some(ExclusionReason::Skipped) => report.skipped += 1,
            Some(ExclusionReason::NoClicks) => report.no_clicks += 1,
            Some(ExclusionReason::ShortCaption) => report.short_caption += 1,
        }
    }
    (kept, report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub mean: f64,
    pub std: f64,
    pub max: usize,
}

impl LengthStats {
    fn of(lengths: &[usize]) -> Self {
        let values: Vec<f64> = lengths.iter().map(|&l| l as f64).collect();
        let (mean, std) = mean_std(&values);
        Self {
            mean,
            std,
            max: lengths.iter().copied().max().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub total_clicks: usize,
    pub total_observations: usize,
    pub total_sessions: usize,
    pub excluded_skipped: usize,
    pub excluded_no_clicks: usize,
    pub excluded_short_caption: usize,
    pub caption_chars: LengthStats,
    pub caption_words: LengthStats,
    pub images_covered: usize,
}

/// Statistics over a full observation set.
///
/// Click, observation and session totals count every observation; caption
/// statistics and image coverage use only the observations that survive
/// [`apply_exclusions`].
pub fn summarize(obs: &[Observation]) -> Result<DatasetSummary> {
    if obs.is_empty() {
        return Err(Error::param("cannot summarize an empty observation set"));
    }
    let (kept, report) = apply_exclusions(obs);
    if kept.is_empty() {
        return Err(Error::param("every observation was excluded"));
    }
    let chars: Vec<usize> = kept.iter().map(|o| o.caption.chars().count()).collect();
    let words: Vec<usize> = kept.iter().map(|o| o.caption.split_whitespace().count()).collect();
    Ok(DatasetSummary {
        total_clicks: obs.iter().map(|o| o.clicks.len()).sum(),
        total_observations: obs.len(),
        total_sessions: obs.iter().map(|o| o.session_id.as_str()).collect::<BTreeSet<_>>().len(),
        excluded_skipped: report.skipped,
        excluded_no_clicks: report.no_clicks,
        excluded_short_caption: report.short_caption,
        caption_chars: LengthStats::of(&chars),
        caption_words: LengthStats::of(&words),
        images_covered: kept.iter().map(|o| o.image_id.as_str()).collect::<BTreeSet<_>>().len(),
    })
}

/// Number of observations per click count, with every count in `1..=10`
/// present.
pub fn click_count_histogram(obs: &[Observation]) -> BTreeMap<usize, usize> {
    let mut hist: BTreeMap<usize, usize> = (1..=MAX_CLICKS).map(|n| (n, 0)).collect();
    for o in obs {
        if let Some(c) = hist.get_mut(&o.clicks.len()) {
            *c += 1;
        }
    }
    hist
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Scott's rule per axis: `std * n^(-1/6)`.
    Scott,
    /// Fixed bandwidth in normalized units, on both axes.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdeOptions {
    pub bandwidth: Bandwidth,
    pub grid: (usize, usize),
}

impl Default for KdeOptions {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Scott,
            grid: DEFAULT_DENSITY_GRID,
        }
    }
}

/// Gaussian KDE of normalized points evaluated at cell centers.
pub fn kde(points: &[(f64, f64)], opts: &KdeOptions) -> Result<DensityMap> {
    if points.is_empty() {
        return Err(Error::param("KDE needs at least one point"));
    }
    let (gw, gh) = opts.grid;
    if gw == 0 || gh == 0 {
        return Err(Error::param("density grid must be non-empty"));
    }
    let (bx, by) = match opts.bandwidth {
        Bandwidth::Fixed(b) if b > 0.0 && b.is_finite() => (b, b),
        Bandwidth::Fixed(b) => return Err(Error::param(format!("bandwidth must be positive, got {b}"))),
        Bandwidth::Scott => {
            let factor = (points.len() as f64).powf(-1.0 / 6.0);
            let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
            (
                (mean_std(&xs).1 * factor).max(MIN_BANDWIDTH),
                (mean_std(&ys).1 * factor).max(MIN_BANDWIDTH),
            )
        }
    };
    let mut weights = vec![0.0; gw * gh];
    for row in 0..gh {
        let cy = (row as f64 + 0.5) / gh as f64;
        for col in 0..gw {
            let cx = (col as f64 + 0.5) / gw as f64;
            weights[row * gw + col] = points
                .iter()
                .map(|&(px, py)| {
                    let dx = (cx - px) / bx;
                    let dy = (cy - py) / by;
                    (-0.5 * (dx * dx + dy * dy)).exp()
                })
                .sum();
        }
    }
    DensityMap::from_weights(gw, gh, weights)
}

fn normalized_click(o: &Observation, f: &Fixation, sizes: &HashMap<String, (usize, usize)>) -> Result<(f64, f64)> {
    let &(w, h) = sizes
        .get(&o.image_id)
        .ok_or_else(|| Error::Input(format!("no image size known for {}", o.image_id)))?;
    Ok((f.x / w as f64, f.y / h as f64))
}

/// KDE over every click, each scaled by the size of its image.
pub fn click_density(obs: &[Observation], sizes: &HashMap<String, (usize, usize)>, opts: &KdeOptions) -> Result<DensityMap> {
    let mut points = Vec::new();
    for o in obs {
        for f in &o.clicks {
            points.push(normalized_click(o, f, sizes)?);
        }
    }
    kde(&points, opts)
}

/// KDE over the `n`-th click (1-based) of every observation that has one.
pub fn nth_click_density(
    obs: &[Observation],
    n: usize,
    sizes: &HashMap<String, (usize, usize)>,
    opts: &KdeOptions,
) -> Result<DensityMap> {
    if !(1..=MAX_CLICKS).contains(&n) {
        return Err(Error::param(format!("click index must lie in 1..={MAX_CLICKS}, got {n}")));
    }
    let mut points = Vec::new();
    for o in obs {
        if let Some(f) = o.clicks.get(n - 1) {
            points.push(normalized_click(o, f, sizes)?);
        }
    }
    if points.is_empty() {
        return Err(Error::param(format!("no observation has a click number {n}")));
    }
    kde(&points, opts)
}

#[derive(Debug, Deserialize)]
struct EyetrackRow {
    image_id: String,
    subject: String,
    ordinal: u64,
    x: f64,
    y: f64,
}

/// Reads preprocessed eye-tracking fixations, one scanpath per
/// (image, subject), ordered by ordinal. Output is sorted by image id then
/// subject.
pub fn load_eyetrack(path: &Path) -> Result<Vec<Scanpath>> {
    let mut reader = csv::Reader::from_path(path).map_err(crate::metrics::csv_err)?;
    let mut groups: BTreeMap<(String, String), Vec<(u64, usize, Fixation)>> = BTreeMap::new();
    for (idx, row) in reader.deserialize::<EyetrackRow>().enumerate() {
        // Header is line 1.
        let line = idx + 2;
        let row = row.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        groups
            .entry((row.image_id, row.subject))
            .or_default()
            .push((row.ordinal, line, Fixation::new(row.x, row.y)));
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((image_id, subject), mut rows) in groups {
        rows.sort_by_key(|r| r.0);
        if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: w[1].1,
                message: format!("ordinal {} repeated for subject {subject} on {image_id}", w[1].0),
            });
        }
        let fixations = rows.into_iter().map(|r| r.2).collect();
        out.push(Scanpath::new(image_id, fixations, ScanpathSource::HumanEyetrack, subject));
    }
    Ok(out)
}
