//! Scanpath plausibility.
//!
//! Scanpaths are quantized onto a `gx x gy` cell grid and compared as
//! strings. `SBTDE_k(a, b)` averages, over every contiguous length-`k`
//! window of `a`, the smallest edit distance to a length-`k` window of `b`,
//! divided by `k`. `SPP_k` is the best `1 - SBTDE_k` against any human
//! reference of the same image.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Scanpath;

/// Longest sublength considered by [`spp_summary`] by default.
pub const DEFAULT_K_MAX: usize = 10;

/// Default quantization grid.
pub const DEFAULT_GRID: (usize, usize) = (8, 8);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanpathString {
    pub symbols: Vec<u32>,
    pub grid: (usize, usize),
}

impl ScanpathString {
    pub fn new(symbols: Vec<u32>, grid: (usize, usize)) -> Result<Self> {
        let cells = grid.0 * grid.1;
        if cells == 0 {
            return Err(Error::param("quantization grid must be non-empty"));
        }
        if let Some(s) = symbols.iter().find(|&&s| s as usize >= cells) {
            return Err(Error::param(format!("label {s} outside a {}x{} grid", grid.0, grid.1)));
        }
        Ok(Self { symbols, grid })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// Cell label `floor(x gx / w) + gx floor(y gy / h)`, clamped to the grid.
pub fn quantize(sp: &Scanpath, width: usize, height: usize, gx: usize, gy: usize) -> Result<ScanpathString> {
    if gx == 0 || gy == 0 {
        return Err(Error::param("quantization grid must be non-empty"));
    }
    if width == 0 || height == 0 {
        return Err(Error::param("image must be non-empty"));
    }
    let cell = |v: f64, dim: usize, g: usize| {
        let c = (v * g as f64 / dim as f64).floor();
        if c.is_nan() {
            0
        } else {
            c.clamp(0.0, (g - 1) as f64) as usize
        }
    };
    let symbols = sp
        .fixations
        .iter()
        .map(|f| (cell(f.x, width, gx) + gx * cell(f.y, height, gy)) as u32)
        .collect();
    Ok(ScanpathString {
        symbols,
        grid: (gx, gy),
    })
}

/// Levenshtein distance with unit costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = Vec::new();
    levenshtein(&mut row, a, b)
}

// Two-row DP reusing `row` across calls.
fn levenshtein<T: PartialEq>(row: &mut Vec<usize>, a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    row.clear();
    row.extend(0..=b.len());
    for (i, ac) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, bc) in b.iter().enumerate() {
            let sub = diag + usize::from(ac != bc);
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(diag + 1);
        }
    }
    row[b.len()]
}

fn check_grids(a: &ScanpathString, b: &ScanpathString) -> Result<()> {
    if a.grid != b.grid {
        return Err(Error::param(format!(
            "scanpath strings use different grids: {:?} vs {:?}",
            a.grid, b.grid
        )));
    }
    Ok(())
}

/// Sum over windows of `a` of the minimal window edit distance to `b`.
/// The caller guarantees `1 <= k <= min(|a|, |b|)`.
fn sbtde_numerator(a: &[u32], b: &[u32], k: usize, row: &mut Vec<usize>) -> usize {
    a.windows(k)
        .map(|x| {
            let mut best = k;
            for y in b.windows(k) {
                best = best.min(levenshtein(row, x, y));
                if best == 0 {
                    break;
                }
            }
            best
        })
        .sum()
}

/// `SBTDE_k(a, b)` in `[0, 1]`.
pub fn sbtde_k(a: &ScanpathString, b: &ScanpathString, k: usize) -> Result<f64> {
    check_grids(a, b)?;
    if k == 0 || k > a.len() || k > b.len() {
        return Err(Error::param(format!(
            "sublength {k} invalid for strings of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut row = Vec::with_capacity(k + 1);
    let total = sbtde_numerator(&a.symbols, &b.symbols, k, &mut row);
    let windows = a.len() - k + 1;
    Ok(total as f64 / (windows * k) as f64)
}

/// Best `1 - SBTDE_k` over the humans at least `k` long.
pub fn spp_k(sim: &ScanpathString, humans: &[ScanpathString], k: usize) -> Result<f64> {
    if k == 0 || k > sim.len() {
        return Err(Error::param(format!(
            "sublength {k} invalid for a simulated scanpath of length {}",
            sim.len()
        )));
    }
    let mut best: Option<f64> = None;
    for h in humans.iter().filter(|h| h.len() >= k) {
        let s = 1.0 - sbtde_k(sim, h, k)?;
        best = Some(best.map_or(s, |b: f64| b.max(s)));
    }
    best.ok_or_else(|| Error::param(format!("no human reference of length >= {k}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KStats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SppSummary {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SppReport {
    pub per_k: BTreeMap<usize, KStats>,
    /// Mean over `k` of the per-k means and of the per-k standard deviations.
    pub summary: SppSummary,
    /// Image ids of simulated scanpaths that had no usable human reference.
    pub missing: Vec<String>,
}

/// A quantized scanpath tagged with its image.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledString {
    pub image_id: String,
    pub string: ScanpathString,
}

/// Population mean and standard deviation.
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// SPP for every simulated scanpath and every `k <= k_max`, aggregated per `k`.
///
/// A simulated scanpath contributes at `k` when it is at least `k` long and
/// some reference of its image is at least `k` long. Standard deviations are
/// population statistics across simulated scanpaths.
pub fn spp_summary(
    sims: &[LabeledString],
    humans_by_image: &BTreeMap<String, Vec<ScanpathString>>,
    k_max: usize,
) -> Result<SppReport> {
    if k_max == 0 {
        return Err(Error::param("k_max must be at least 1"));
    }
    let per_sim: Vec<Option<Vec<(usize, f64)>>> = sims
        .par_iter()
        .map(|sim| -> Result<Option<Vec<(usize, f64)>>> {
            let Some(humans) = humans_by_image.get(&sim.image_id).filter(|h| !h.is_empty()) else {
                return Ok(None);
            };
            let longest = humans.iter().map(ScanpathString::len).max().unwrap_or(0);
            let top = k_max.min(sim.string.len()).min(longest);
            (1..=top)
                .map(|k| Ok((k, spp_k(&sim.string, humans, k)?)))
                .collect::<Result<Vec<_>>>()
                .map(|v| (!v.is_empty()).then_some(v))
        })
        .collect::<Result<_>>()?;

    let mut by_k: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut missing = Vec::new();
    for (sim, scores) in sims.iter().zip(per_sim) {
        match scores {
            Some(scores) => {
                for (k, s) in scores {
                    by_k.entry(k).or_default().push(s);
                }
            }
            None => missing.push(sim.image_id.clone()),
        }
    }
    if by_k.is_empty() {
        return Err(Error::Input("no simulated scanpath has a usable human reference".into()));
    }
    let per_k: BTreeMap<usize, KStats> = by_k
        .into_iter()
        .map(|(k, v)| {
            let (mean, std) = mean_std(&v);
            (k, KStats { mean, std, count: v.len() })
        })
        .collect();
    let n = per_k.len() as f64;
    let summary = SppSummary {
        mean: per_k.values().map(|s| s.mean).sum::<f64>() / n,
        std: per_k.values().map(|s| s.std).sum::<f64>() / n,
    };
    Ok(SppReport {
        per_k,
        summary,
        missing,
    })
}

/// One report in a table: which model, on which dataset.
pub struct ReportRow<'a> {
    pub model: &'a str,
    pub dataset: &'a str,
    pub report: &'a SppReport,
}

/// Writes `model,dataset,k,mean,std` rows, one per `k`, then a `summary` row
/// per report.
pub fn write_report_csv<W: Write>(out: W, rows: &[ReportRow<'_>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "dataset", "k", "mean", "std"])
        .map_err(csv_err)?;
    for row in rows {
        for (k, s) in &row.report.per_k {
            w.write_record([
                row.model,
                row.dataset,
                &k.to_string(),
                &s.mean.to_string(),
                &s.std.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.write_record([
            row.model,
            row.dataset,
            "summary",
            &row.report.summary.mean.to_string(),
            &row.report.summary.std.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Input(format!("csv: {other:?}")),
    }
}
