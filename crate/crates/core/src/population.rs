//! Synthetic problem populations with controlled difficulty.
//!
//! Each problem is a `K`-armed bandit with a set of correct arms and a unit
//! feature vector. Problems are grouped into clusters that share a feature
//! direction and, with probability `cluster_agreement`, a correct arm. The
//! shared policy component acts through the features, so clusters are where
//! transfer and interference between problems come from.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::PolicyState;
use crate::seed::{rng_from, substream, SimRng};

pub const POPULATION_FORMAT_VERSION: u32 = 1;

/// Standard deviation of the per-coordinate perturbation applied to a
/// cluster direction before renormalizing.
pub const CLUSTER_JITTER: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: usize,
    pub num_arms: usize,
    pub correct_arms: Vec<usize>,
    pub feature: Vec<f64>,
    pub target_p0: f64,
    pub cluster: usize,
    /// Index of the difficulty band this problem was drawn from.
    pub band: usize,
}

impl Problem {
    pub fn is_correct(&self, arm: usize) -> bool {
        self.correct_arms.contains(&arm)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_arms < 2 {
            return Err(Error::config("num_arms", "need at least 2 arms"));
        }
        if self.correct_arms.is_empty() || self.correct_arms.iter().any(|&a| a >= self.num_arms)
        {
            return Err(Error::config(
                "correct_arms",
                format!("problem {} has an empty or out-of-range correct set", self.id),
            ));
        }
        let norm = self.feature.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::config(
                "feature",
                format!("problem {} feature norm {norm} is not 1", self.id),
            ));
        }
        if !(0.0..=1.0).contains(&self.target_p0) {
            return Err(Error::config("target_p0", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DifficultySpec {
    pub name: String,
    pub p0_range: [f64; 2],
    pub weight: f64,
}

impl DifficultySpec {
    pub fn new(name: &str, lo: f64, hi: f64, weight: f64) -> Self {
        Self {
            name: name.to_string(),
            p0_range: [lo, hi],
            weight,
        }
    }

    /// avg@16 in [0.3, 0.6].
    pub fn easy(weight: f64) -> Self {
        Self::new("easy", 0.3, 0.6, weight)
    }

    /// avg@16 in [0.0, 0.0625].
    pub fn hard(weight: f64) -> Self {
        Self::new("hard", 0.0, 0.0625, weight)
    }

    pub fn very_easy(weight: f64) -> Self {
        Self::new("very_easy", 0.6, 0.9, weight)
    }

    /// Stand-in for problems with no observed success in 128 samples. Kept
    /// strictly positive so reward stays observable.
    pub fn extremely_hard(weight: f64) -> Self {
        Self::new("extremely_hard", 1e-4, 8e-3, weight)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PopulationConfig {
    pub train_size: usize,
    pub val_size: usize,
    pub num_arms: usize,
    pub feature_dim: usize,
    pub cluster_count: usize,
    /// Probability that a problem's correct arm is its cluster's arm.
    pub cluster_agreement: f64,
    pub num_correct: usize,
    pub specs: Vec<DifficultySpec>,
    pub seed: u64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            train_size: 6000,
            val_size: 300,
            num_arms: 8,
            feature_dim: 16,
            cluster_count: 32,
            cluster_agreement: 0.75,
            num_correct: 1,
            specs: vec![DifficultySpec::easy(1.0)],
            seed: 0,
        }
    }
}

impl PopulationConfig {
    pub fn easy(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn hard(seed: u64) -> Self {
        Self {
            train_size: 5000,
            specs: vec![DifficultySpec::hard(1.0)],
            seed,
            ..Self::default()
        }
    }

    /// 50% hard, 25% easy, 25% very easy.
    pub fn tri_mix(seed: u64) -> Self {
        Self {
            train_size: 5000,
            specs: vec![
                DifficultySpec::hard(0.5),
                DifficultySpec::easy(0.25),
                DifficultySpec::very_easy(0.25),
            ],
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_size < 1 {
            return Err(Error::config("population.train_size", "must be >= 1"));
        }
        if self.val_size < 1 {
            return Err(Error::config("population.val_size", "must be >= 1"));
        }
        if self.num_arms < 2 {
            return Err(Error::config("population.num_arms", "must be >= 2"));
        }
        if self.feature_dim < 1 {
            return Err(Error::config("population.feature_dim", "must be >= 1"));
        }
        if self.cluster_count < 1 {
            return Err(Error::config("population.cluster_count", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.cluster_agreement) {
            return Err(Error::config(
                "population.cluster_agreement",
                "must lie in [0, 1]",
            ));
        }
        if self.num_correct < 1 || self.num_correct >= self.num_arms {
            return Err(Error::config(
                "population.num_correct",
                "must satisfy 1 <= num_correct < num_arms",
            ));
        }
        if self.specs.is_empty() {
            return Err(Error::config("population.specs", "at least one difficulty spec is required"));
        }
        for (i, s) in self.specs.iter().enumerate() {
            let [lo, hi] = s.p0_range;
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
                return Err(Error::config(
                    format!("population.specs[{i}].p0_range"),
                    format!("[{lo}, {hi}] is not an interval inside [0, 1]"),
                ));
            }
            if !(0.0..=1.0).contains(&s.weight) {
                return Err(Error::config(
                    format!("population.specs[{i}].weight"),
                    "must lie in [0, 1]",
                ));
            }
        }
        let total: f64 = self.specs.iter().map(|s| s.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(
                "population.specs",
                format!("mixture weights sum to {total}, expected 1"),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub format_version: u32,
    pub config: PopulationConfig,
    pub train: Vec<Problem>,
    pub val: Vec<Problem>,
}

impl Population {
    pub fn num_problems(&self) -> usize {
        self.train.len() + self.val.len()
    }

    pub fn all(&self) -> impl Iterator<Item = &Problem> {
        self.train.iter().chain(self.val.iter())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let pop: Population = serde_json::from_str(&text)?;
        if pop.format_version != POPULATION_FORMAT_VERSION {
            return Err(Error::config(
                "format_version",
                format!(
                    "unsupported population format {} (expected {POPULATION_FORMAT_VERSION})",
                    pop.format_version
                ),
            ));
        }
        for p in pop.all() {
            p.validate()?;
        }
        Ok(pop)
    }
}

/// Tabular logit `c` placed on each of `num_correct` arms (zero elsewhere) so
/// that the softmax puts total mass `p` on the correct set:
/// `c = ln(p (K - m) / ((1 - p) m))`.
pub fn calibrate_logit_offset(p: f64, num_arms: usize, num_correct: usize) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::DegenerateDifficulty(p));
    }
    if num_correct < 1 || num_correct >= num_arms {
        return Err(Error::config(
            "num_correct",
            format!("need 1 <= {num_correct} < {num_arms}"),
        ));
    }
    let k = num_arms as f64;
    let m = num_correct as f64;
    Ok((p * (k - m) / ((1.0 - p) * m)).ln())
}

fn random_unit(rng: &mut SimRng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

struct Cluster {
    direction: Vec<f64>,
    arms: Vec<usize>,
}

fn draw_arm_set(rng: &mut SimRng, num_arms: usize, count: usize) -> Vec<usize> {
    let mut arms = rand::seq::index::sample(rng, num_arms, count).into_vec();
    arms.sort_unstable();
    arms
}

/// Draws train and validation splits i.i.d. from the configured mixture.
/// Deterministic in `config.seed`.
pub fn generate_population(config: &PopulationConfig) -> Result<Population> {
    config.validate()?;
    let mut cluster_rng = substream(config.seed, 0xC1);
    let clusters: Vec<Cluster> = (0..config.cluster_count)
        .map(|_| Cluster {
            direction: random_unit(&mut cluster_rng, config.feature_dim),
            arms: draw_arm_set(&mut cluster_rng, config.num_arms, config.num_correct),
        })
        .collect();

    let weights: Vec<f64> = config.specs.iter().map(|s| s.weight).collect();
    let band_dist = WeightedIndex::new(&weights)
        .map_err(|e| Error::config("population.specs", e.to_string()))?;

    let draw = |rng: &mut SimRng, id: usize| -> Problem {
        let band = band_dist.sample(rng);
        let [lo, hi] = config.specs[band].p0_range;
        let target_p0 = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let cluster = rng.random_range(0..config.cluster_count);
        let c = &clusters[cluster];
        let mut feature: Vec<f64> = c
            .direction
            .iter()
            .map(|&x| x + CLUSTER_JITTER * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = feature.iter().map(|x| x * x).sum::<f64>().sqrt();
        feature.iter_mut().for_each(|x| *x /= norm);
        let correct_arms = if rng.random_bool(config.cluster_agreement) {
            c.arms.clone()
        } else {
            draw_arm_set(rng, config.num_arms, config.num_correct)
        };
        Problem {
            id,
            num_arms: config.num_arms,
            correct_arms,
            feature,
            target_p0,
            cluster,
            band,
        }
    };

    let mut train_rng = substream(config.seed, 0x7A);
    let train: Vec<Problem> = (0..config.train_size)
        .map(|i| draw(&mut train_rng, i))
        .collect();
    let mut val_rng = substream(config.seed, 0x7B);
    let val: Vec<Problem> = (0..config.val_size)
        .map(|i| draw(&mut val_rng, config.train_size + i))
        .collect();

    Ok(Population {
        format_version: POPULATION_FORMAT_VERSION,
        config: config.clone(),
        train,
        val,
    })
}

/// Keeps the problems whose mean reward over `samples` rollouts under
/// `policy` falls inside `[lo, hi]`. Order is preserved.
pub fn curate_by_difficulty(
    problems: &[Problem],
    policy: &PolicyState,
    lo: f64,
    hi: f64,
    samples: usize,
    seed: u64,
) -> Result<Vec<Problem>> {
    if samples < 1 {
        return Err(Error::config("samples", "must be >= 1"));
    }
    let mut rng = rng_from(seed);
    let mut kept = Vec::new();
    for p in problems {
        let group = policy.sample_rollout_group(p, samples, &mut rng)?;
        let mean = group.mean_reward();
        if mean >= lo && mean <= hi {
            kept.push(p.clone());
        }
    }
    Ok(kept)
}
