//! End-to-end frontier analysis over a directory of run logs, plus the
//! summary report built from its outputs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontier::{
    envelope_by_key, extract_record_breaking, fit_monotone_sigmoid, fit_nstar_sigmoid, log_grid,
    moving_average, recommend, FrontierCurve, RewardPoint, SigmoidFit, DEFAULT_BIN_WIDTH,
    DEFAULT_GRID_SIZE, DEFAULT_WINDOW,
};
use crate::sweep::{average_replicates, load_runs, Metric, RunGroups};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub bin_width: f64,
    pub grid_size: usize,
    pub window: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            bin_width: DEFAULT_BIN_WIDTH,
            grid_size: DEFAULT_GRID_SIZE,
            window: DEFAULT_WINDOW,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width > 0.0) {
            return Err(Error::config("analysis.bin_width", "must be positive"));
        }
        if self.grid_size < 2 {
            return Err(Error::config("analysis.grid_size", "must be >= 2"));
        }
        if self.window == 0 || self.window.is_multiple_of(2) {
            return Err(Error::config("analysis.window", "must be a positive odd number"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFit {
    #[serde(rename = "B_p")]
    pub batch_problems: usize,
    pub n: usize,
    pub record_points: usize,
    pub fit: Option<SigmoidFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub metric: Metric,
    pub config: AnalysisConfig,
    pub curves: Vec<CurveFit>,
    pub frontier: FrontierCurve,
    /// `B_p` of the curve attaining the envelope at each budget.
    pub frontier_bp: Vec<usize>,
    pub nstar_fit: SigmoidFit,
    pub recommended_n: Vec<usize>,
}

fn fit_curve(points: &[RewardPoint], bin_width: f64) -> Result<(usize, Option<SigmoidFit>, Option<String>)> {
    let positive: Vec<RewardPoint> = points.iter().copied().filter(|p| p.compute > 0.0).collect();
    let records = extract_record_breaking(&positive, bin_width)?;
    Ok(match records.len() {
        0 => (0, None, Some("no points past step 0".into())),
        1 => {
            let r = records[0];
            let domain = [r.compute, positive.last().map_or(r.compute, |p| p.compute)];
            (1, Some(SigmoidFit::constant(r.reward, domain, 1)), Some("single record point".into()))
        }
        count => {
            let mut fit = fit_monotone_sigmoid(&records)?;
            // Hold the plateau out to the last logged compute.
            if let Some(last) = positive.last() {
                fit.domain[1] = fit.domain[1].max(last.compute);
            }
            let note = fit.low_confidence.then(|| format!("{count} record points"));
            (count, Some(fit), note)
        }
    })
}

/// Record-breaking extraction, per-curve fits, envelope, smoothing and the
/// n*(C) fit over curves keyed by `(B_p, n)`.
pub fn analyze_curves(
    curves: &BTreeMap<(usize, usize), Vec<RewardPoint>>,
    metric: Metric,
    config: &AnalysisConfig,
) -> Result<Analysis> {
    config.validate()?;
    let mut fitted = Vec::with_capacity(curves.len());
    let mut by_key: BTreeMap<(usize, usize), SigmoidFit> = BTreeMap::new();
    for (&(bp, n), points) in curves {
        let (record_points, fit, note) = fit_curve(points, config.bin_width)?;
        if let Some(f) = &fit {
            by_key.insert((n, bp), f.clone());
        }
        fitted.push(CurveFit {
            batch_problems: bp,
            n,
            record_points,
            fit,
            note,
        });
    }
    if by_key.is_empty() {
        return Err(Error::MissingInput("no curve has enough data to fit".into()));
    }
    let c_min = by_key.values().map(|f| f.domain[0]).fold(f64::INFINITY, f64::min);
    let c_max = by_key.values().map(|f| f.domain[1]).fold(f64::NEG_INFINITY, f64::max);
    let grid = log_grid(c_min, c_max, config.grid_size);
    let (envelope, keys) = envelope_by_key(&by_key, &grid)?;
    let frontier_n: Vec<usize> = keys.iter().map(|k| k.0).collect();
    let raw: Vec<f64> = frontier_n.iter().map(|&n| (n as f64).log2()).collect();
    let smoothed = moving_average(&raw, config.window)?;

    let swept: Vec<usize> = {
        let mut v: Vec<usize> = curves.keys().map(|k| k.1).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let n_max = *swept.last().expect("curves is non-empty");
    let nstar_fit = fit_nstar_sigmoid(&grid, &smoothed, (n_max as f64).log2())?;
    let recommended_n = grid
        .iter()
        .map(|&c| recommend(&nstar_fit, c, &swept).expect("swept is non-empty"))
        .collect();
    Ok(Analysis {
        metric,
        config: config.clone(),
        curves: fitted,
        frontier: FrontierCurve {
            grid,
            envelope_reward: envelope,
            frontier_n,
            smoothed_log2_nstar: smoothed,
        },
        frontier_bp: keys.iter().map(|k| k.1).collect(),
        nstar_fit,
        recommended_n,
    })
}

/// Zero-pass fraction of each curve at each budget, taken from the last
/// logged point at or below that budget.
pub fn zero_pass_at(
    runs: &RunGroups,
    grid: &[f64],
) -> Vec<ZeroPassRow> {
    let mut out = Vec::new();
    for (&(bp, n), reps) in runs {
        let series = average_replicates(reps, Metric::ZeroPassFrac);
        for &c in grid {
            if let Some(p) = series.iter().rev().find(|p| p.compute <= c * (1.0 + 1e-12)) {
                out.push(ZeroPassRow {
                    compute: c,
                    batch_problems: bp,
                    n,
                    logged_compute: p.compute,
                    zero_pass_frac: p.reward,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroPassRow {
    pub compute: f64,
    #[serde(rename = "B_p")]
    pub batch_problems: usize,
    pub n: usize,
    pub logged_compute: f64,
    pub zero_pass_frac: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FrontierRow {
    compute: f64,
    envelope_reward: f64,
    frontier_n: usize,
    smoothed_log2_nstar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NstarRow {
    compute: f64,
    fitted_log2_nstar: f64,
    recommended_n: usize,
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|_| Error::MissingInput(format!("missing {}", path.display())))?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn frontier_file(metric: Metric) -> String {
    format!("frontier_{}.csv", metric.name())
}

pub fn fits_file(metric: Metric) -> String {
    format!("fits_{}.json", metric.name())
}

pub fn nstar_file(metric: Metric) -> String {
    format!("nstar_{}.csv", metric.name())
}

pub const ZERO_PASS_FILE: &str = "zero_pass.csv";

/// Analyzes the runs under `run_dir` (optionally only those with the given
/// `B_p`) and writes the frontier, fit, n* and zero-pass tables to `out_dir`.
pub fn analyze_dir(
    run_dir: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    metric: Metric,
    batch_problems: Option<usize>,
    config: &AnalysisConfig,
) -> Result<Analysis> {
    let out_dir = out_dir.as_ref();
    let mut runs = load_runs(run_dir)?;
    if let Some(bp) = batch_problems {
        runs.retain(|k, _| k.0 == bp);
        if runs.is_empty() {
            return Err(Error::MissingInput(format!("no runs with B_p = {bp}")));
        }
    }
    let curves = runs
        .iter()
        .map(|(&k, reps)| (k, average_replicates(reps, metric)))
        .collect();
    let analysis = analyze_curves(&curves, metric, config)?;

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let f = &analysis.frontier;
    write_rows(
        &out_dir.join(frontier_file(metric)),
        (0..f.grid.len()).map(|j| FrontierRow {
            compute: f.grid[j],
            envelope_reward: f.envelope_reward[j],
            frontier_n: f.frontier_n[j],
            smoothed_log2_nstar: f.smoothed_log2_nstar[j],
        }),
    )?;
    write_rows(
        &out_dir.join(nstar_file(metric)),
        f.grid.iter().zip(&analysis.recommended_n).map(|(&c, &n)| NstarRow {
            compute: c,
            fitted_log2_nstar: analysis.nstar_fit.predict(c),
            recommended_n: n,
        }),
    )?;
    let fits_path = out_dir.join(fits_file(metric));
    std::fs::write(&fits_path, serde_json::to_string_pretty(&analysis)?)
        .map_err(|e| Error::io(&fits_path, e))?;
    write_rows(&out_dir.join(ZERO_PASS_FILE), zero_pass_at(&runs, &f.grid))?;
    Ok(analysis)
}

const REPORT_METRICS: [Metric; 3] = [Metric::Avg, Metric::Best4, Metric::Worst4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationRow {
    pub metric: Metric,
    #[serde(rename = "B_p")]
    pub batch_problems: usize,
    pub n: usize,
    pub saturation: Option<f64>,
    pub low_confidence: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgmaxRow {
    pub metric: Metric,
    pub compute: f64,
    pub argmax_n: usize,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NstarTableRow {
    pub compute: f64,
    pub frontier_n: usize,
    pub smoothed_log2_nstar: f64,
    pub recommended_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub primary: Metric,
    pub nstar: Vec<NstarTableRow>,
    pub saturation: Vec<SaturationRow>,
    pub argmax: Vec<ArgmaxRow>,
    /// Zero-pass fractions at the largest budget every curve has reached.
    pub zero_pass: Vec<ZeroPassRow>,
}

/// Summary tables over whatever analyses exist in `analysis_dir`. The n*
/// table uses `avg` when present, otherwise the first metric found.
pub fn build_report(analysis_dir: impl AsRef<Path>) -> Result<Report> {
    let dir = analysis_dir.as_ref();
    let mut analyses: Vec<Analysis> = Vec::new();
    for metric in REPORT_METRICS {
        let path = dir.join(fits_file(metric));
        if path.is_file() {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            analyses.push(serde_json::from_str(&text)?);
        }
    }
    let Some(primary) = analyses.first() else {
        return Err(Error::MissingInput(format!(
            "no analysis outputs in {}",
            dir.display()
        )));
    };
    let f = &primary.frontier;
    let nstar = (0..f.grid.len())
        .map(|j| NstarTableRow {
            compute: f.grid[j],
            frontier_n: f.frontier_n[j],
            smoothed_log2_nstar: f.smoothed_log2_nstar[j],
            recommended_n: primary.recommended_n[j],
        })
        .collect();
    let saturation = analyses
        .iter()
        .flat_map(|a| {
            a.curves.iter().map(move |c| SaturationRow {
                metric: a.metric,
                batch_problems: c.batch_problems,
                n: c.n,
                saturation: c.fit.as_ref().map(|f| f.hi),
                low_confidence: c.fit.as_ref().is_none_or(|f| f.low_confidence),
            })
        })
        .collect();
    let argmax = analyses
        .iter()
        .map(|a| {
            let last = a.frontier.grid.len() - 1;
            ArgmaxRow {
                metric: a.metric,
                compute: a.frontier.grid[last],
                argmax_n: a.frontier.frontier_n[last],
                reward: a.frontier.envelope_reward[last],
            }
        })
        .collect();

    let zp_path = dir.join(ZERO_PASS_FILE);
    let zp_rows: Vec<ZeroPassRow> = if zp_path.is_file() { read_rows(&zp_path)? } else { Vec::new() };
    let mut per_curve_max: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for r in &zp_rows {
        let slot = per_curve_max.entry((r.batch_problems, r.n)).or_insert(0.0);
        *slot = slot.max(r.logged_compute);
    }
    let matched = per_curve_max.values().copied().fold(f64::INFINITY, f64::min);
    let budget = zp_rows
        .iter()
        .map(|r| r.compute)
        .filter(|&c| c <= matched * (1.0 + 1e-12))
        .fold(f64::NEG_INFINITY, f64::max);
    let zero_pass = zp_rows.into_iter().filter(|r| r.compute == budget).collect();

    Ok(Report {
        primary: primary.metric,
        nstar,
        saturation,
        argmax,
        zero_pass,
    })
}

/// Writes the report tables as CSV files into `dir`.
pub fn write_report(report: &Report, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    write_rows(&dir.join("report_nstar.csv"), &report.nstar)?;
    write_rows(&dir.join("report_saturation.csv"), &report.saturation)?;
    write_rows(&dir.join("report_argmax.csv"), &report.argmax)?;
    write_rows(&dir.join("report_zero_pass.csv"), &report.zero_pass)
}
