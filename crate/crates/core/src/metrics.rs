//! avg, best@k, worst@k, and pass@1 distribution diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::PolicyState;
use crate::population::Problem;
use crate::seed::SimRng;

/// A problem counts as unsolved when its pass@1 is at or below this.
pub const ZERO_PASS_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub avg: f64,
    pub best_at_k: f64,
    pub worst_at_k: f64,
    pub k: usize,
    pub per_problem_p: Vec<f64>,
    pub zero_pass_frac: f64,
}

/// Probability that at least one of `n` independent draws succeeds.
pub fn pass_at_n(p: f64, n: usize) -> f64 {
    1.0 - (1.0 - p).powi(n as i32)
}

/// Metrics computed from the exact per-problem success probabilities.
pub fn exact_metrics(state: &PolicyState, problems: &[Problem], k: usize) -> Result<MetricReport> {
    if problems.is_empty() {
        return Err(Error::Empty("problem list"));
    }
    if k < 1 {
        return Err(Error::config("k", "must be >= 1"));
    }
    let per_problem_p = problems
        .iter()
        .map(|p| state.correct_mass(p))
        .collect::<Result<Vec<_>>>()?;
    Ok(report_from_probabilities(per_problem_p, k))
}

pub fn report_from_probabilities(per_problem_p: Vec<f64>, k: usize) -> MetricReport {
    let count = per_problem_p.len() as f64;
    let mean = |f: &dyn Fn(f64) -> f64| per_problem_p.iter().map(|&p| f(p)).sum::<f64>() / count;
    MetricReport {
        avg: mean(&|p| p),
        best_at_k: mean(&|p| pass_at_n(p, k)),
        worst_at_k: mean(&|p| p.powi(k as i32)),
        k,
        zero_pass_frac: mean(&|p| if p <= ZERO_PASS_THRESHOLD { 1.0 } else { 0.0 }),
        per_problem_p,
    }
}

/// Sampled counterpart of [`exact_metrics`]: `trials` groups of `k`
/// rollouts per problem.
pub fn mc_metrics(
    state: &PolicyState,
    problems: &[Problem],
    k: usize,
    trials: usize,
    rng: &mut SimRng,
) -> Result<MetricReport> {
    if problems.is_empty() {
        return Err(Error::Empty("problem list"));
    }
    if k < 1 || trials < 1 {
        return Err(Error::config("trials", "k and trials must be >= 1"));
    }
    let mut per_problem_p = Vec::with_capacity(problems.len());
    let (mut best, mut worst) = (0.0, 0.0);
    for p in problems {
        let group = state.sample_rollout_group(p, k * trials, rng)?;
        let mut any_hits = 0usize;
        let mut all_hits = 0usize;
        for chunk in group.rewards.chunks(k) {
            let hits = chunk.iter().filter(|&&r| r > 0.0).count();
            any_hits += usize::from(hits > 0);
            all_hits += usize::from(hits == k);
        }
        best += any_hits as f64 / trials as f64;
        worst += all_hits as f64 / trials as f64;
        per_problem_p.push(group.mean_reward());
    }
    let count = problems.len() as f64;
    let avg = per_problem_p.iter().sum::<f64>() / count;
    let zero = per_problem_p
        .iter()
        .filter(|&&p| p <= ZERO_PASS_THRESHOLD)
        .count() as f64;
    Ok(MetricReport {
        avg,
        best_at_k: best / count,
        worst_at_k: worst / count,
        k,
        per_problem_p,
        zero_pass_frac: zero / count,
    })
}

/// Counts of `values` over `num_bins` equal bins of `[0, 1]`; bin `b` is
/// `[b/num_bins, (b+1)/num_bins)` and the last bin is closed.
pub fn histogram(values: &[f64], num_bins: usize) -> Vec<usize> {
    let mut counts = vec![0usize; num_bins.max(1)];
    let bins = counts.len();
    for &v in values {
        let b = ((v * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
}

pub fn pass1_histogram(
    state: &PolicyState,
    problems: &[Problem],
    num_bins: usize,
) -> Result<Vec<usize>> {
    if num_bins < 1 {
        return Err(Error::config("num_bins", "must be >= 1"));
    }
    let ps = problems
        .iter()
        .map(|p| state.correct_mass(p))
        .collect::<Result<Vec<_>>>()?;
    Ok(histogram(&ps, num_bins))
}
