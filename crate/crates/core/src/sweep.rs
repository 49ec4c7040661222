//! Grid enumeration, parallel resumable execution, and log aggregation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontier::RewardPoint;
use crate::population::Population;
use crate::seed::derive_seed;
use crate::trainer::{read_runlog_csv, run_id_for, run_training, Recipe, RunLogRow, TrainConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUNLOG_FILE: &str = "runlog.csv";
/// Environment variable consulted for the worker count.
pub const WORKERS_ENV: &str = "NSTAR_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepMode {
    #[serde(rename = "fix_Bp")]
    FixBp,
    #[serde(rename = "fix_B")]
    FixB,
    #[serde(rename = "joint")]
    Joint,
}

impl std::str::FromStr for SweepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fix_bp" => Ok(Self::FixBp),
            "fix_b" => Ok(Self::FixB),
            "joint" => Ok(Self::Joint),
            _ => Err(Error::config("sweep.mode", format!("unknown mode `{s}`"))),
        }
    }
}

fn powers_of_two(lo: u32, hi: u32) -> Vec<usize> {
    (lo..=hi).map(|e| 1usize << e).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepGrid {
    #[serde(rename = "B_p_values")]
    pub batch_problem_values: Vec<usize>,
    pub n_values: Vec<usize>,
    pub mode: SweepMode,
    #[serde(rename = "B_max")]
    pub max_batch: usize,
    #[serde(rename = "C_total")]
    pub total_compute: u64,
    #[serde(rename = "fixed_B", skip_serializing_if = "Option::is_none")]
    pub fixed_batch: Option<usize>,
    pub base_seed: u64,
    pub replicates: usize,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            batch_problem_values: powers_of_two(5, 10),
            n_values: powers_of_two(3, 11),
            mode: SweepMode::FixBp,
            max_batch: 65_536,
            total_compute: 1 << 22,
            fixed_batch: None,
            base_seed: 0,
            replicates: 1,
        }
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.batch_problem_values.is_empty() || self.batch_problem_values.contains(&0) {
            return Err(Error::config("sweep.B_p_values", "need one or more values, all >= 1"));
        }
        if self.n_values.is_empty() || self.n_values.contains(&0) {
            return Err(Error::config("sweep.n_values", "need one or more values, all >= 1"));
        }
        if self.max_batch < 1 {
            return Err(Error::config("sweep.B_max", "must be >= 1"));
        }
        if self.total_compute < 1 {
            return Err(Error::config("sweep.C_total", "must be >= 1"));
        }
        if self.replicates < 1 {
            return Err(Error::config("sweep.replicates", "must be >= 1"));
        }
        match (self.mode, self.fixed_batch) {
            (SweepMode::FixB, None) => {
                Err(Error::config("sweep.fixed_B", "required when mode = fix_B"))
            }
            (_, Some(0)) => Err(Error::config("sweep.fixed_B", "must be >= 1")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Pending,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub run_id: String,
    #[serde(rename = "B_p")]
    pub batch_problems: usize,
    pub n: usize,
    #[serde(rename = "M")]
    pub steps: usize,
    pub replicate: usize,
    pub seed: u64,
    /// Relative to the sweep directory.
    pub path: String,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// A feasible pair whose budget does not cover a single step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedConfig {
    #[serde(rename = "B_p")]
    pub batch_problems: usize,
    pub n: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub grid: SweepGrid,
    pub entries: Vec<ManifestEntry>,
    pub skipped: Vec<SkippedConfig>,
}

impl SweepManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Writes through a temporary file and a rename so readers never see a
    /// partial manifest.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn count(&self, status: RunStatus) -> usize {
        self.entries.iter().filter(|e| e.status == status).count()
    }
}

/// Seed for one `(B_p, n, replicate)` cell; independent of the rest of the grid.
pub fn config_seed(base_seed: u64, batch_problems: usize, n: usize, replicate: usize) -> u64 {
    derive_seed(&[base_seed, batch_problems as u64, n as u64, replicate as u64])
}

pub fn enumerate_configs(grid: &SweepGrid) -> Result<SweepManifest> {
    grid.validate()?;
    let bps: BTreeSet<usize> = grid.batch_problem_values.iter().copied().collect();
    let ns: BTreeSet<usize> = grid.n_values.iter().copied().collect();
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for &bp in &bps {
        for &n in &ns {
            let batch = bp * n;
            if batch > grid.max_batch {
                continue;
            }
            if grid.mode == SweepMode::FixB && Some(batch) != grid.fixed_batch {
                continue;
            }
            let steps = (grid.total_compute / batch as u64) as usize;
            if steps == 0 {
                skipped.push(SkippedConfig {
                    batch_problems: bp,
                    n,
                    reason: format!("B_p*n = {batch} exceeds C_total = {}", grid.total_compute),
                });
                continue;
            }
            for replicate in 0..grid.replicates {
                let run_id = run_id_for(bp, n, replicate);
                entries.push(ManifestEntry {
                    path: run_id.clone(),
                    run_id,
                    batch_problems: bp,
                    n,
                    steps,
                    replicate,
                    seed: config_seed(grid.base_seed, bp, n, replicate),
                    status: RunStatus::Pending,
                    error: None,
                });
            }
        }
    }
    if entries.is_empty() {
        return Err(Error::config("sweep", "no feasible (B_p, n) configuration"));
    }
    Ok(SweepManifest {
        grid: grid.clone(),
        entries,
        skipped,
    })
}

/// Worker count from `NSTAR_WORKERS`, else the available parallelism.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub struct SweepOptions {
    pub workers: usize,
    /// Permit continuing a sweep already present in the output directory.
    pub resume: bool,
}

/// Executes every pending or failed entry of `manifest` into `out_dir`.
///
/// If `out_dir` already holds a manifest for the same grid and `resume` is
/// set, its completed runs are kept and not recomputed. Run failures are
/// recorded on the entry and do not stop the sweep.
pub fn run_sweep(
    out_dir: impl AsRef<Path>,
    manifest: SweepManifest,
    pop: &Population,
    recipe: &Recipe,
    options: &SweepOptions,
) -> Result<SweepManifest> {
    let out_dir = out_dir.as_ref();
    recipe.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let manifest_path = out_dir.join(MANIFEST_FILE);

    let mut manifest = manifest;
    if manifest_path.exists() {
        let previous = SweepManifest::load(&manifest_path)?;
        if !options.resume {
            return Err(Error::config(
                "resume",
                format!("{} already holds a sweep; pass --resume to continue it", out_dir.display()),
            ));
        }
        if previous.grid != manifest.grid {
            return Err(Error::config(
                "sweep",
                "grid differs from the manifest already in the output directory",
            ));
        }
        let done: BTreeMap<&str, &ManifestEntry> = previous
            .entries
            .iter()
            .filter(|e| e.status == RunStatus::Completed)
            .map(|e| (e.run_id.as_str(), e))
            .collect();
        for entry in &mut manifest.entries {
            if let Some(prev) = done.get(entry.run_id.as_str()) {
                if out_dir.join(&prev.path).join(RUNLOG_FILE).exists() {
                    entry.status = RunStatus::Completed;
                }
            }
        }
    }
    manifest.save(&manifest_path)?;

    let todo: Vec<usize> = (0..manifest.entries.len())
        .filter(|&i| manifest.entries[i].status != RunStatus::Completed)
        .collect();
    let shared = Mutex::new(manifest);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;

    pool.install(|| {
        todo.par_iter().try_for_each(|&i| -> Result<()> {
            let entry = shared.lock().expect("manifest lock").entries[i].clone();
            let config = TrainConfig::new(entry.batch_problems, entry.n, entry.steps, recipe.clone())
                .with_seed(entry.seed);
            let outcome = run_training(pop, &config).and_then(|mut log| {
                log.run_id = entry.run_id.clone();
                log.write_dir(out_dir.join(&entry.path))
            });
            let mut guard = shared.lock().expect("manifest lock");
            let slot = &mut guard.entries[i];
            match outcome {
                Ok(()) => {
                    slot.status = RunStatus::Completed;
                    slot.error = None;
                }
                Err(e) => {
                    slot.status = RunStatus::Failed;
                    slot.error = Some(e.to_string());
                }
            }
            guard.save(&manifest_path)
        })
    })?;

    Ok(shared.into_inner().expect("manifest lock"))
}

/// Column of a run log used as the reward of a curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Avg,
    Best4,
    Worst4,
    ZeroPassFrac,
    TrainReward,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Avg => "avg",
            Metric::Best4 => "best4",
            Metric::Worst4 => "worst4",
            Metric::ZeroPassFrac => "zero_pass_frac",
            Metric::TrainReward => "train_reward",
        }
    }

    pub fn of(self, row: &RunLogRow) -> f64 {
        match self {
            Metric::Avg => row.val_avg,
            Metric::Best4 => row.val_best4,
            Metric::Worst4 => row.val_worst4,
            Metric::ZeroPassFrac => row.zero_pass_frac,
            Metric::TrainReward => row.train_reward,
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" => Ok(Metric::Avg),
            "best4" => Ok(Metric::Best4),
            "worst4" => Ok(Metric::Worst4),
            "zero_pass_frac" => Ok(Metric::ZeroPassFrac),
            "train_reward" => Ok(Metric::TrainReward),
            other => Err(Error::config("emit", format!("unknown metric `{other}`"))),
        }
    }
}

/// Run logs under `run_dir`, grouped by `(B_p, n)` with one entry per
/// replicate. Every immediate subdirectory holding a run log counts.
/// Run-log rows per `(B_p, n)`, one inner list per replicate.
pub type RunGroups = BTreeMap<(usize, usize), Vec<Vec<RunLogRow>>>;

pub fn load_runs(run_dir: impl AsRef<Path>) -> Result<RunGroups> {
    let run_dir = run_dir.as_ref();
    let read = std::fs::read_dir(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let mut dirs: Vec<PathBuf> = read
        .filter_map(|d| d.ok().map(|d| d.path()))
        .filter(|p| p.join(RUNLOG_FILE).is_file())
        .collect();
    if run_dir.join(RUNLOG_FILE).is_file() {
        dirs.push(run_dir.to_path_buf());
    }
    dirs.sort();
    let mut groups = RunGroups::new();
    for dir in dirs {
        let rows = read_runlog_csv(dir.join(RUNLOG_FILE))?;
        if let Some(first) = rows.first() {
            groups
                .entry((first.batch_problems, first.n))
                .or_default()
                .push(rows);
        }
    }
    if groups.is_empty() {
        return Err(Error::MissingInput(format!(
            "no completed runs under {}",
            run_dir.display()
        )));
    }
    Ok(groups)
}

/// Reward-vs-compute series per `(B_p, n)`. Replicates are averaged at
/// each shared compute value; points are sorted by compute.
pub fn aggregate(run_dir: impl AsRef<Path>, metric: Metric) -> Result<BTreeMap<(usize, usize), Vec<RewardPoint>>> {
    Ok(load_runs(run_dir)?
        .into_iter()
        .map(|(key, reps)| (key, average_replicates(&reps, metric)))
        .collect())
}

pub fn average_replicates(replicates: &[Vec<RunLogRow>], metric: Metric) -> Vec<RewardPoint> {
    let mut acc: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for rows in replicates {
        for row in rows {
            let slot = acc.entry(row.compute).or_insert((0.0, 0));
            slot.0 += metric.of(row);
            slot.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(compute, (sum, count))| RewardPoint {
            compute: compute as f64,
            reward: sum / count as f64,
        })
        .collect()
}
