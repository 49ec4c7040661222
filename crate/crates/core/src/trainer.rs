//! GRPO-style on-policy training over a problem population.
//!
//! One step samples `B_p` problems, draws `n` rollouts for each, turns the
//! 0/1 rewards into group-relative advantages and takes an ascent step on
//! `(1 / (B_p n)) * sum A_j grad log pi(a_j)` plus optional entropy bonus and
//! KL penalty to the initial policy. Compute is counted in rollouts.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::exact_metrics;
use crate::policy::{entropy_logit_grad, kl_logit_grad, sample_group, softmax, PolicyState};
use crate::population::{Population, Problem};
use crate::seed::{rng_from, SimRng};

/// Floor on the group standard deviation when normalizing advantages.
pub const STD_EPS: f64 = 1e-6;

/// Largest action-tuple count [`expected_update_oracle`] will enumerate.
pub const ORACLE_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrRule {
    Constant,
    Linear,
    Sqrt,
}

impl std::str::FromStr for LrRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Self::Constant),
            "linear" => Ok(Self::Linear),
            "sqrt" => Ok(Self::Sqrt),
            other => Err(Error::config("lr_rule", format!("unknown rule `{other}`"))),
        }
    }
}

/// What is subtracted from each reward before the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Group mean, optionally divided by the group standard deviation.
    GroupMean,
    /// Nothing: the raw reward is the advantage (plain REINFORCE averaging).
    Zero,
}

/// Everything about a run except its `(B_p, n, M)` allocation and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Recipe {
    pub lr_rule: LrRule,
    pub eta_base: f64,
    pub b_ref: usize,
    pub entropy_coef: f64,
    pub kl_coef: f64,
    pub zero_variance_filter: bool,
    pub std_normalize: bool,
    pub baseline: Baseline,
    /// Rollouts used for the baseline statistics when larger than `n`.
    pub n_est: Option<usize>,
    pub eval_every: usize,
    pub eval_k: usize,
    /// Interference coefficient of the policy.
    pub lambda: f64,
}

impl Default for Recipe {
    fn default() -> Self {
        Self::easy()
    }
}

impl Recipe {
    /// Entropy bonus and KL anchor on, square-root LR scaling.
    pub fn easy() -> Self {
        Self {
            lr_rule: LrRule::Sqrt,
            eta_base: 20.0,
            b_ref: 1024,
            entropy_coef: 1e-3,
            kl_coef: 1e-3,
            zero_variance_filter: false,
            std_normalize: true,
            baseline: Baseline::GroupMean,
            n_est: None,
            eval_every: 1,
            eval_k: 4,
            lambda: 0.5,
        }
    }

    /// No regularizers.
    pub fn hard() -> Self {
        Self {
            entropy_coef: 0.0,
            kl_coef: 0.0,
            ..Self::easy()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta_base > 0.0 && self.eta_base.is_finite()) {
            return Err(Error::config("trainer.eta_base", "must be positive"));
        }
        if self.b_ref < 1 {
            return Err(Error::config("trainer.b_ref", "must be >= 1"));
        }
        if !(self.entropy_coef >= 0.0) {
            return Err(Error::config("trainer.entropy_coef", "must be >= 0"));
        }
        if !(self.kl_coef >= 0.0) {
            return Err(Error::config("trainer.kl_coef", "must be >= 0"));
        }
        if self.eval_every < 1 {
            return Err(Error::config("trainer.eval_every", "must be >= 1"));
        }
        if self.eval_k < 1 {
            return Err(Error::config("trainer.eval_k", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config("trainer.lambda", "must lie in [0, 1]"));
        }
        if self.n_est == Some(0) {
            return Err(Error::config("trainer.n_est", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(rename = "B_p")]
    pub batch_problems: usize,
    #[serde(rename = "n")]
    pub group_size: usize,
    #[serde(rename = "M")]
    pub steps: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub recipe: Recipe,
}

impl TrainConfig {
    pub fn new(batch_problems: usize, group_size: usize, steps: usize, recipe: Recipe) -> Self {
        Self {
            batch_problems,
            group_size,
            steps,
            seed: 0,
            recipe,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_problems < 1 {
            return Err(Error::config("B_p", "must be >= 1"));
        }
        if self.group_size < 1 {
            return Err(Error::config("n", "must be >= 1"));
        }
        if let Some(est) = self.recipe.n_est {
            if est < self.group_size {
                return Err(Error::config(
                    "n_est",
                    format!("{est} is smaller than n = {}", self.group_size),
                ));
            }
        }
        self.recipe.validate()
    }

    /// Rollouts drawn per problem per step.
    pub fn rollouts_per_problem(&self) -> usize {
        self.recipe.n_est.unwrap_or(0).max(self.group_size)
    }

    pub fn compute_per_step(&self) -> u64 {
        (self.batch_problems * self.rollouts_per_problem()) as u64
    }

    /// Learning rate from the scaling rule at `B = B_p * n`.
    pub fn lr(&self) -> f64 {
        lr_for_batch(
            self.recipe.lr_rule,
            self.recipe.eta_base,
            self.recipe.b_ref,
            self.batch_problems * self.group_size,
        )
    }
}

pub fn lr_for_batch(rule: LrRule, eta_base: f64, b_ref: usize, batch: usize) -> f64 {
    let ratio = batch as f64 / b_ref as f64;
    match rule {
        LrRule::Constant => eta_base,
        LrRule::Linear => eta_base * ratio,
        LrRule::Sqrt => eta_base * ratio.sqrt(),
    }
}

/// Population mean and standard deviation.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn all_equal(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] == w[1])
}

/// `A_j = r_j - mean`, divided by `max(std, 1e-6)` when `std_normalize`.
/// Groups of identical rewards get all-zero advantages.
pub fn group_advantages(rewards: &[f64], std_normalize: bool) -> Vec<f64> {
    if all_equal(rewards) {
        return vec![0.0; rewards.len()];
    }
    let (mean, std) = mean_std(rewards);
    let scale = if std_normalize { 1.0 / std.max(STD_EPS) } else { 1.0 };
    rewards.iter().map(|r| (r - mean) * scale).collect()
}

/// Advantages for `subsample` using statistics of every reward in
/// `rewards_est`.
pub fn group_advantages_decoupled(
    rewards_est: &[f64],
    subsample: &[usize],
    std_normalize: bool,
) -> Result<Vec<f64>> {
    let mut seen = vec![false; rewards_est.len()];
    for &i in subsample {
        if i >= rewards_est.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: rewards_est.len(),
            });
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::DuplicateIndex(i));
        }
    }
    let full = group_advantages(rewards_est, std_normalize);
    Ok(subsample.iter().map(|&i| full[i]).collect())
}

fn advantages_for(rewards: &[f64], baseline: Baseline, std_normalize: bool) -> Vec<f64> {
    match baseline {
        Baseline::GroupMean => group_advantages(rewards, std_normalize),
        Baseline::Zero => rewards.to_vec(),
    }
}

/// `(1/n) sum_j A_j (onehot(a_j) - pi)` accumulated into `out`.
fn accumulate_pg(out: &mut [f64], probs: &[f64], actions: &[usize], advantages: &[f64]) {
    let n = actions.len() as f64;
    let mut adv_sum = 0.0;
    for (&a, &adv) in actions.iter().zip(advantages) {
        out[a] += adv / n;
        adv_sum += adv;
    }
    if adv_sum != 0.0 {
        for (o, &p) in out.iter_mut().zip(probs) {
            *o -= adv_sum / n * p;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Mean reward over every rollout drawn this step.
    pub mean_reward: f64,
    /// Problems dropped by the zero-variance filter.
    pub filtered: usize,
    pub lr: f64,
}

/// One on-policy update of `state` on `batch`.
pub fn train_step(
    state: &mut PolicyState,
    batch: &[&Problem],
    config: &TrainConfig,
    rng: &mut SimRng,
) -> Result<StepOutcome> {
    let recipe = &config.recipe;
    let n = config.group_size;
    let draws = config.rollouts_per_problem();
    let lambda = state.lambda();
    let k = state.num_arms();
    let d = state.params().feature_dim;
    let inv_bp = 1.0 / batch.len() as f64;
    let lr = config.lr();

    let mut rows: Vec<(usize, Vec<f64>)> = Vec::with_capacity(batch.len());
    let mut shared = vec![0.0; k * d];
    let mut reward_sum = 0.0;
    let mut filtered = 0;

    for &problem in batch {
        let logits = state.logits(problem)?;
        let probs = softmax(&logits);
        let group = sample_group(problem, &probs, draws, rng);
        reward_sum += group.rewards.iter().sum::<f64>();

        if recipe.zero_variance_filter && group.is_zero_variance() {
            filtered += 1;
            continue;
        }

        let mut g = vec![0.0; k];
        if draws > n {
            let idx = rand::seq::index::sample(rng, draws, n).into_vec();
            let adv = match recipe.baseline {
                Baseline::GroupMean => {
                    group_advantages_decoupled(&group.rewards, &idx, recipe.std_normalize)?
                }
                Baseline::Zero => idx.iter().map(|&i| group.rewards[i]).collect(),
            };
            let actions: Vec<usize> = idx.iter().map(|&i| group.actions[i]).collect();
            accumulate_pg(&mut g, &probs, &actions, &adv);
        } else {
            let adv = advantages_for(&group.rewards, recipe.baseline, recipe.std_normalize);
            accumulate_pg(&mut g, &probs, &group.actions, &adv);
        }

        if recipe.entropy_coef > 0.0 {
            let (_, gh) = entropy_logit_grad(&logits);
            g.iter_mut()
                .zip(&gh)
                .for_each(|(x, h)| *x += recipe.entropy_coef * h);
        }
        if recipe.kl_coef > 0.0 {
            let base = base_logits(state, problem);
            let (_, gk) = kl_logit_grad(&logits, &base);
            g.iter_mut()
                .zip(&gk)
                .for_each(|(x, q)| *x -= recipe.kl_coef * q);
        }

        g.iter_mut().for_each(|x| *x *= inv_bp);
        if lambda != 0.0 {
            for (a, &ga) in g.iter().enumerate() {
                if ga == 0.0 {
                    continue;
                }
                let row = &mut shared[a * d..(a + 1) * d];
                for (w, &f) in row.iter_mut().zip(&problem.feature) {
                    *w += lambda * ga * f;
                }
            }
        }
        rows.push((problem.id, g));
    }

    if !rows.is_empty() {
        state.apply_logit_update(&rows, &shared, lr);
    }

    Ok(StepOutcome {
        mean_reward: reward_sum / (batch.len() * draws) as f64,
        filtered,
        lr,
    })
}

fn base_logits(state: &PolicyState, problem: &Problem) -> Vec<f64> {
    let base = state.base();
    let row = base.row(problem.id);
    (0..base.num_arms)
        .map(|a| {
            let dot: f64 = base
                .shared_row(a)
                .iter()
                .zip(&problem.feature)
                .map(|(w, f)| w * f)
                .sum();
            row[a] + state.lambda() * dot
        })
        .collect()
}

/// Exact expectation of the per-problem update direction
/// `(1/n) sum_j A_j (onehot(a_j) - pi)` in tabular-logit coordinates,
/// by enumerating all `K^n` action tuples.
pub fn expected_update_oracle(
    state: &PolicyState,
    problem: &Problem,
    n: usize,
    std_normalize: bool,
    baseline: Baseline,
) -> Result<Vec<f64>> {
    let k = state.num_arms();
    let total = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if total > ORACLE_LIMIT {
        return Err(Error::EnumerationTooLarge(total));
    }
    let probs = state.action_probs(problem)?;
    let mut expected = vec![0.0; k];
    let mut actions = vec![0usize; n];
    let mut rewards = vec![0.0; n];
    let mut update = vec![0.0; k];
    for code in 0..total as usize {
        let mut c = code;
        let mut weight = 1.0;
        for j in 0..n {
            actions[j] = c % k;
            c /= k;
            weight *= probs[actions[j]];
            rewards[j] = if problem.is_correct(actions[j]) { 1.0 } else { 0.0 };
        }
        if weight == 0.0 {
            continue;
        }
        let adv = advantages_for(&rewards, baseline, std_normalize);
        update.iter_mut().for_each(|u| *u = 0.0);
        accumulate_pg(&mut update, &probs, &actions, &adv);
        for (e, u) in expected.iter_mut().zip(&update) {
            *e += weight * u;
        }
    }
    Ok(expected)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub compute: u64,
    pub train_reward: f64,
    pub val_avg: f64,
    pub val_best4: f64,
    pub val_worst4: f64,
    pub zero_pass_frac: f64,
    pub entropy: f64,
    pub kl: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct RunLog {
    pub run_id: String,
    pub config: TrainConfig,
    pub records: Vec<StepRecord>,
    pub final_state: PolicyState,
}

/// CSV row layout, in column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLogRow {
    pub run_id: String,
    #[serde(rename = "B_p")]
    pub batch_problems: usize,
    pub n: usize,
    #[serde(rename = "M_total")]
    pub steps_total: usize,
    pub step: usize,
    pub compute: u64,
    pub train_reward: f64,
    pub val_avg: f64,
    pub val_best4: f64,
    pub val_worst4: f64,
    pub zero_pass_frac: f64,
    pub entropy: f64,
    pub kl: f64,
    pub lr: f64,
}

pub const RUNLOG_COLUMNS: [&str; 14] = [
    "run_id",
    "B_p",
    "n",
    "M_total",
    "step",
    "compute",
    "train_reward",
    "val_avg",
    "val_best4",
    "val_worst4",
    "zero_pass_frac",
    "entropy",
    "kl",
    "lr",
];

impl RunLog {
    pub fn rows(&self) -> impl Iterator<Item = RunLogRow> + '_ {
        self.records.iter().map(|r| RunLogRow {
            run_id: self.run_id.clone(),
            batch_problems: self.config.batch_problems,
            n: self.config.group_size,
            steps_total: self.config.steps,
            step: r.step,
            compute: r.compute,
            train_reward: r.train_reward,
            val_avg: r.val_avg,
            val_best4: r.val_best4,
            val_worst4: r.val_worst4,
            zero_pass_frac: r.zero_pass_frac,
            entropy: r.entropy,
            kl: r.kl,
            lr: r.lr,
        })
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::MissingInput(format!("{other:?}")),
        })?;
        for row in self.rows() {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Writes `runlog.csv` and the `config.json` sidecar into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.write_csv(dir.join("runlog.csv"))?;
        let sidecar = dir.join("config.json");
        std::fs::write(&sidecar, serde_json::to_string_pretty(&self.config)?)
            .map_err(|e| Error::io(&sidecar, e))
    }
}

pub fn read_runlog_csv(path: impl AsRef<Path>) -> Result<Vec<RunLogRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::MissingInput(format!("{other:?}")),
    })?;
    let headers = r.headers()?.clone();
    if headers.iter().ne(RUNLOG_COLUMNS.iter().copied()) {
        return Err(Error::MissingInput(format!(
            "{}: unexpected columns {:?}",
            path.display(),
            headers
        )));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Uniform sampling without replacement within an epoch, reshuffled at each
/// epoch boundary.
#[derive(Debug, Clone)]
pub struct EpochSampler {
    order: Vec<usize>,
    pos: usize,
}

impl EpochSampler {
    pub fn new(len: usize, rng: &mut SimRng) -> Self {
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(rng);
        Self { order, pos: 0 }
    }

    pub fn next_batch(&mut self, size: usize, rng: &mut SimRng) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

fn evaluate(
    state: &PolicyState,
    pop: &Population,
    config: &TrainConfig,
    step: usize,
    train_reward: f64,
    lr: f64,
) -> Result<StepRecord> {
    let report = exact_metrics(state, &pop.val, config.recipe.eval_k)?;
    let (mut ent, mut kl) = (0.0, 0.0);
    for p in &pop.val {
        let (h, q) = state.entropy_and_kl(p)?;
        ent += h;
        kl += q;
    }
    let count = pop.val.len() as f64;
    Ok(StepRecord {
        step,
        compute: step as u64 * config.compute_per_step(),
        train_reward,
        val_avg: report.avg,
        val_best4: report.best_at_k,
        val_worst4: report.worst_at_k,
        zero_pass_frac: report.zero_pass_frac,
        entropy: ent / count,
        kl: kl / count,
        lr,
    })
}

/// Trains a freshly calibrated policy on `pop.train` for `config.steps`
/// steps, evaluating exactly on `pop.val` at step 0 and every
/// `eval_every` steps.
pub fn run_training(pop: &Population, config: &TrainConfig) -> Result<RunLog> {
    let state = PolicyState::for_population(pop, config.recipe.lambda)?;
    run_training_from(pop, state, config)
}

pub fn run_training_from(
    pop: &Population,
    mut state: PolicyState,
    config: &TrainConfig,
) -> Result<RunLog> {
    config.validate()?;
    if pop.train.is_empty() || pop.val.is_empty() {
        return Err(Error::Empty("population split"));
    }
    let mut rng = rng_from(config.seed);
    let mut sampler = EpochSampler::new(pop.train.len(), &mut rng);
    let lr = config.lr();

    let initial_train = pop
        .train
        .iter()
        .map(|p| state.correct_mass(p))
        .sum::<Result<f64>>()?
        / pop.train.len() as f64;
    let mut records = vec![evaluate(&state, pop, config, 0, initial_train, lr)?];

    let mut window_reward = 0.0;
    let mut window_steps = 0usize;
    for step in 1..=config.steps {
        let idx = sampler.next_batch(config.batch_problems, &mut rng);
        let batch: Vec<&Problem> = idx.iter().map(|&i| &pop.train[i]).collect();
        let outcome = train_step(&mut state, &batch, config, &mut rng)?;
        window_reward += outcome.mean_reward;
        window_steps += 1;
        if step % config.recipe.eval_every == 0 {
            if !state.is_finite() {
                return Err(Error::Diverged(step));
            }
            let train_reward = window_reward / window_steps as f64;
            records.push(evaluate(&state, pop, config, step, train_reward, lr)?);
            window_reward = 0.0;
            window_steps = 0;
        }
    }

    Ok(RunLog {
        run_id: run_id_for(config.batch_problems, config.group_size, 0),
        config: config.clone(),
        records,
        final_state: state,
    })
}

pub fn run_id_for(batch_problems: usize, group_size: usize, replicate: usize) -> String {
    format!("bp{batch_problems}_n{group_size}_r{replicate}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn advantage_examples() {
        assert_eq!(group_advantages(&[1.0; 4], true), vec![0.0; 4]);
        assert_eq!(group_advantages(&[1.0; 4], false), vec![0.0; 4]);
        assert_eq!(group_advantages(&[1.0, 0.0], true), vec![1.0, -1.0]);
        let a = group_advantages(&[1.0, 0.0, 0.0, 0.0], true);
        assert!(close(
            &a,
            &[1.732_050_8, -0.577_350_3, -0.577_350_3, -0.577_350_3],
            1e-7
        ));
        let c = group_advantages(&[1.0, 0.0, 0.0, 0.0], false);
        assert_eq!(c, vec![0.75, -0.25, -0.25, -0.25]);
        assert_eq!(group_advantages(&[0.0], true), vec![0.0]);
    }

    #[test]
    fn decoupled_examples() {
        let r = [1.0, 0.0, 0.0, 0.0];
        let a = group_advantages_decoupled(&r, &[0], true).unwrap();
        assert!((a[0] - 1.732_050_8).abs() < 1e-7);
        assert_eq!(
            group_advantages_decoupled(&r, &[0, 1, 2, 3], true).unwrap(),
            group_advantages(&r, true)
        );
        assert_eq!(
            group_advantages_decoupled(&[0.0; 6], &[5, 2], true).unwrap(),
            vec![0.0, 0.0]
        );
        assert!(matches!(
            group_advantages_decoupled(&r, &[1, 1], true),
            Err(Error::DuplicateIndex(1))
        ));
        assert!(group_advantages_decoupled(&r, &[4], true).is_err());
    }

    #[test]
    fn lr_rules() {
        assert_eq!(lr_for_batch(LrRule::Sqrt, 1e-6, 1024, 1024), 1e-6);
        let s = lr_for_batch(LrRule::Sqrt, 1e-6, 1024, 8192);
        assert!((s - 2.828_427_124_746_19e-6).abs() / s < 1e-12);
        assert!((lr_for_batch(LrRule::Linear, 1e-6, 1024, 4096) - 4e-6).abs() < 1e-20);
        assert_eq!(lr_for_batch(LrRule::Constant, 1e-6, 1024, 4096), 1e-6);
    }

    fn single(k: usize, p: f64, lambda: f64) -> (PolicyState, Problem) {
        let prob = Problem {
            id: 0,
            num_arms: k,
            correct_arms: vec![0],
            feature: vec![1.0],
            target_p0: p,
            cluster: 0,
            band: 0,
        };
        let s = PolicyState::calibrated([&prob], 1, k, 1, lambda).unwrap();
        (s, prob)
    }

    #[test]
    fn oracle_hand_enumeration() {
        let (s, p) = single(2, 0.5, 0.0);
        let u = expected_update_oracle(&s, &p, 2, false, Baseline::GroupMean).unwrap();
        assert!((u[0] - 0.125).abs() < 1e-15 && (u[1] + 0.125).abs() < 1e-15);
    }

    #[test]
    fn oracle_limit() {
        let (s, p) = single(8, 0.5, 0.0);
        assert!(matches!(
            expected_update_oracle(&s, &p, 7, false, Baseline::GroupMean),
            Err(Error::EnumerationTooLarge(_))
        ));
    }

    #[test]
    fn filtered_batch_leaves_state_untouched() {
        let (mut s, p) = single(2, 1.0, 0.5);
        let before = s.clone();
        let mut cfg = TrainConfig::new(1, 4, 1, Recipe::easy());
        cfg.recipe.zero_variance_filter = true;
        cfg.recipe.entropy_coef = 0.3;
        cfg.recipe.kl_coef = 0.3;
        let out = train_step(&mut s, &[&p], &cfg, &mut rng_from(0)).unwrap();
        assert_eq!(out.filtered, 1);
        assert_eq!(s, before);
    }

    #[test]
    fn lambda_zero_does_not_couple_problems() {
        let problems: Vec<Problem> = (0..3)
            .map(|i| Problem {
                id: i,
                num_arms: 3,
                correct_arms: vec![i % 3],
                feature: vec![1.0, 0.0],
                target_p0: 0.4,
                cluster: 0,
                band: 0,
            })
            .collect();
        let mut s = PolicyState::calibrated(&problems, 3, 3, 2, 0.0).unwrap();
        let before: Vec<Vec<f64>> = problems[1..]
            .iter()
            .map(|p| s.action_probs(p).unwrap())
            .collect();
        let cfg = TrainConfig::new(1, 8, 1, Recipe::easy());
        for seed in 0..20 {
            train_step(&mut s, &[&problems[0]], &cfg, &mut rng_from(seed)).unwrap();
        }
        let after: Vec<Vec<f64>> = problems[1..]
            .iter()
            .map(|p| s.action_probs(p).unwrap())
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn epoch_sampler_covers_each_problem_once_per_epoch() {
        let mut rng = rng_from(4);
        let mut s = EpochSampler::new(10, &mut rng);
        let mut seen: Vec<usize> = (0..5).flat_map(|_| s.next_batch(2, &mut rng)).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn recipe_validation_names_key() {
        let mut r = Recipe::easy();
        r.eta_base = 0.0;
        match r.validate() {
            Err(Error::InvalidConfig { key, .. }) => assert_eq!(key, "trainer.eta_base"),
            other => panic!("{other:?}"),
        }
        let mut c = TrainConfig::new(4, 8, 1, Recipe::easy());
        c.recipe.n_est = Some(4);
        assert!(c.validate().is_err());
    }

    #[test]
    fn compute_counts_estimation_rollouts() {
        let mut c = TrainConfig::new(4, 8, 1, Recipe::easy());
        assert_eq!(c.compute_per_step(), 32);
        c.recipe.n_est = Some(32);
        assert_eq!(c.compute_per_step(), 128);
    }
}
