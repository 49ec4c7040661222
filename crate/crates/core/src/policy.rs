//! Softmax policy over arms.
//!
//! Logits for problem `i` are `tabular[i] + lambda * (shared · feature_i)`.
//! With `lambda = 0` every problem is an independent tabular softmax; with
//! `lambda > 0` updates on one problem move every problem whose feature
//! overlaps it.

use std::path::Path;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::{calibrate_logit_offset, Population, Problem};
use crate::seed::SimRng;

pub const POLICY_FORMAT_VERSION: u32 = 1;

/// Bound on tabular entries and on the norm of each shared row after an
/// update.
pub const LOGIT_LIMIT: f64 = 50.0;

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|&z| z - lse).collect()
}

/// Raw parameter blocks. `tabular` is `num_problems x num_arms`, `shared` is
/// `num_arms x feature_dim`, both row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub num_problems: usize,
    pub num_arms: usize,
    pub feature_dim: usize,
    pub tabular: Vec<f64>,
    pub shared: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(num_problems: usize, num_arms: usize, feature_dim: usize) -> Self {
        Self {
            num_problems,
            num_arms,
            feature_dim,
            tabular: vec![0.0; num_problems * num_arms],
            shared: vec![0.0; num_arms * feature_dim],
        }
    }

    pub fn row(&self, id: usize) -> &[f64] {
        &self.tabular[id * self.num_arms..(id + 1) * self.num_arms]
    }

    pub fn row_mut(&mut self, id: usize) -> &mut [f64] {
        let k = self.num_arms;
        &mut self.tabular[id * k..(id + 1) * k]
    }

    pub fn shared_row(&self, arm: usize) -> &[f64] {
        &self.shared[arm * self.feature_dim..(arm + 1) * self.feature_dim]
    }

    fn logits_into(&self, lambda: f64, problem: &Problem, out: &mut [f64]) {
        let row = self.row(problem.id);
        for (a, z) in out.iter_mut().enumerate() {
            let dot = if lambda == 0.0 {
                0.0
            } else {
                self.shared_row(a)
                    .iter()
                    .zip(&problem.feature)
                    .map(|(w, f)| w * f)
                    .sum::<f64>()
            };
            *z = row[a] + lambda * dot;
        }
    }

    fn is_finite(&self) -> bool {
        self.tabular.iter().chain(&self.shared).all(|x| x.is_finite())
    }
}

/// Gradient of a per-problem scalar, split into the tabular row and the
/// shared matrix (`num_arms x feature_dim`, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub problem: usize,
    pub tabular: Vec<f64>,
    pub shared: Vec<f64>,
}

impl ParamGrad {
    fn from_logit_grad(problem: &Problem, lambda: f64, logit_grad: &[f64]) -> Self {
        let shared = logit_grad
            .iter()
            .flat_map(|&g| problem.feature.iter().map(move |&f| lambda * g * f))
            .collect();
        Self {
            problem: problem.id,
            tabular: logit_grad.to_vec(),
            shared,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub problem_id: usize,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
}

impl RolloutGroup {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn mean_reward(&self) -> f64 {
        self.rewards.iter().sum::<f64>() / self.rewards.len() as f64
    }

    pub fn is_zero_variance(&self) -> bool {
        self.rewards.windows(2).all(|w| w[0] == w[1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    params: PolicyParams,
    lambda: f64,
    base: Arc<PolicyParams>,
}

#[derive(Serialize, Deserialize)]
struct PolicySnapshot {
    format_version: u32,
    lambda: f64,
    current: PolicyParams,
    base: PolicyParams,
}

impl PolicyState {
    /// Wraps `params` and freezes a copy of them as the KL anchor.
    pub fn new(params: PolicyParams, lambda: f64) -> Result<Self> {
        let base = params.clone();
        Self::with_base(params, base, lambda)
    }

    /// Current parameters anchored to a separate KL reference.
    pub fn with_base(params: PolicyParams, base: PolicyParams, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::config("lambda", format!("{lambda} is outside [0, 1]")));
        }
        for p in [&params, &base] {
            if p.tabular.len() != p.num_problems * p.num_arms
                || p.shared.len() != p.num_arms * p.feature_dim
            {
                return Err(Error::config("policy", "parameter shapes do not match dimensions"));
            }
        }
        if (params.num_problems, params.num_arms, params.feature_dim)
            != (base.num_problems, base.num_arms, base.feature_dim)
        {
            return Err(Error::config("policy", "base and current dimensions differ"));
        }
        Ok(Self {
            params,
            lambda,
            base: Arc::new(base),
        })
    }

    /// Tabular rows calibrated so each problem starts at its `target_p0`;
    /// shared weights start at zero. Targets of exactly 0 or 1 are pushed
    /// to the logit limit.
    pub fn calibrated<'a>(
        problems: impl IntoIterator<Item = &'a Problem>,
        num_problems: usize,
        num_arms: usize,
        feature_dim: usize,
        lambda: f64,
    ) -> Result<Self> {
        let mut params = PolicyParams::zeros(num_problems, num_arms, feature_dim);
        for p in problems {
            if p.id >= num_problems {
                return Err(Error::ProblemOutOfRange {
                    id: p.id,
                    count: num_problems,
                });
            }
            let m = p.correct_arms.len();
            let offset = if m == num_arms {
                0.0
            } else if p.target_p0 <= 0.0 {
                -LOGIT_LIMIT
            } else if p.target_p0 >= 1.0 {
                LOGIT_LIMIT
            } else {
                calibrate_logit_offset(p.target_p0, num_arms, m)?.clamp(-LOGIT_LIMIT, LOGIT_LIMIT)
            };
            let row = params.row_mut(p.id);
            for &a in &p.correct_arms {
                row[a] = offset;
            }
        }
        Self::new(params, lambda)
    }

    pub fn for_population(pop: &Population, lambda: f64) -> Result<Self> {
        Self::calibrated(
            pop.all(),
            pop.num_problems(),
            pop.config.num_arms,
            pop.config.feature_dim,
            lambda,
        )
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn base(&self) -> &PolicyParams {
        &self.base
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn num_arms(&self) -> usize {
        self.params.num_arms
    }

    pub fn is_finite(&self) -> bool {
        self.params.is_finite()
    }

    fn check(&self, problem: &Problem) -> Result<()> {
        if problem.id >= self.params.num_problems {
            return Err(Error::ProblemOutOfRange {
                id: problem.id,
                count: self.params.num_problems,
            });
        }
        Ok(())
    }

    pub fn logits(&self, problem: &Problem) -> Result<Vec<f64>> {
        self.check(problem)?;
        let mut out = vec![0.0; self.params.num_arms];
        self.params.logits_into(self.lambda, problem, &mut out);
        Ok(out)
    }

    fn base_logits(&self, problem: &Problem) -> Vec<f64> {
        let mut out = vec![0.0; self.params.num_arms];
        self.base.logits_into(self.lambda, problem, &mut out);
        out
    }

    pub fn action_probs(&self, problem: &Problem) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(problem)?))
    }

    /// Exact pass@1.
    pub fn correct_mass(&self, problem: &Problem) -> Result<f64> {
        let probs = self.action_probs(problem)?;
        Ok(problem.correct_arms.iter().map(|&a| probs[a]).sum())
    }

    pub fn sample_rollout_group(
        &self,
        problem: &Problem,
        n: usize,
        rng: &mut SimRng,
    ) -> Result<RolloutGroup> {
        let probs = self.action_probs(problem)?;
        Ok(sample_group(problem, &probs, n, rng))
    }

    pub fn logprob_grad(&self, problem: &Problem, action: usize) -> Result<ParamGrad> {
        if action >= self.params.num_arms {
            return Err(Error::ArmOutOfRange {
                arm: action,
                num_arms: self.params.num_arms,
            });
        }
        let probs = self.action_probs(problem)?;
        let g: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(a, &p)| if a == action { 1.0 - p } else { -p })
            .collect();
        Ok(ParamGrad::from_logit_grad(problem, self.lambda, &g))
    }

    pub fn entropy_and_grad(&self, problem: &Problem) -> Result<(f64, ParamGrad)> {
        let logits = self.logits(problem)?;
        let (h, g) = entropy_logit_grad(&logits);
        Ok((h, ParamGrad::from_logit_grad(problem, self.lambda, &g)))
    }

    /// `KL(current || base)` with its gradient in the current parameters.
    pub fn kl_to_base_and_grad(&self, problem: &Problem) -> Result<(f64, ParamGrad)> {
        let logits = self.logits(problem)?;
        let base = self.base_logits(problem);
        let (kl, g) = kl_logit_grad(&logits, &base);
        Ok((kl, ParamGrad::from_logit_grad(problem, self.lambda, &g)))
    }

    /// Entropy and KL to base without gradients.
    pub fn entropy_and_kl(&self, problem: &Problem) -> Result<(f64, f64)> {
        let logits = self.logits(problem)?;
        let base = self.base_logits(problem);
        Ok((entropy_logit_grad(&logits).0, kl_logit_grad(&logits, &base).0))
    }

    /// Adds `scale * g` for each logit-space row gradient `g` (tabular row
    /// plus its feature-projected share) and `scale * shared` to the shared
    /// block, then clamps.
    pub(crate) fn apply_logit_update(
        &mut self,
        rows: &[(usize, Vec<f64>)],
        shared: &[f64],
        scale: f64,
    ) {
        for (id, g) in rows {
            for (x, d) in self.params.row_mut(*id).iter_mut().zip(g) {
                *x += scale * d;
            }
        }
        for (w, d) in self.params.shared.iter_mut().zip(shared) {
            *w += scale * d;
        }
        self.clamp();
    }

    fn clamp(&mut self) {
        for x in &mut self.params.tabular {
            *x = x.clamp(-LOGIT_LIMIT, LOGIT_LIMIT);
        }
        let d = self.params.feature_dim;
        for row in self.params.shared.chunks_mut(d) {
            let norm = row.iter().map(|w| w * w).sum::<f64>().sqrt();
            if norm > LOGIT_LIMIT {
                row.iter_mut().for_each(|w| *w *= LOGIT_LIMIT / norm);
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let snap = PolicySnapshot {
            format_version: POLICY_FORMAT_VERSION,
            lambda: self.lambda,
            current: self.params.clone(),
            base: (*self.base).clone(),
        };
        std::fs::write(path, serde_json::to_string(&snap)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let snap: PolicySnapshot = serde_json::from_str(&text)?;
        if snap.format_version != POLICY_FORMAT_VERSION {
            return Err(Error::config("format_version", "unsupported policy format"));
        }
        let mut state = Self::new(snap.base, snap.lambda)?;
        state.params = snap.current;
        Ok(state)
    }
}

pub(crate) fn sample_group(
    problem: &Problem,
    probs: &[f64],
    n: usize,
    rng: &mut SimRng,
) -> RolloutGroup {
    let dist = WeightedIndex::new(probs).expect("softmax output is a valid distribution");
    let actions: Vec<usize> = (0..n).map(|_| dist.sample(rng)).collect();
    let rewards = actions
        .iter()
        .map(|&a| if problem.is_correct(a) { 1.0 } else { 0.0 })
        .collect();
    RolloutGroup {
        problem_id: problem.id,
        actions,
        rewards,
    }
}

/// Entropy in nats and `dH/dz_k = -pi_k (log pi_k + H)`.
pub(crate) fn entropy_logit_grad(logits: &[f64]) -> (f64, Vec<f64>) {
    let logp = log_softmax(logits);
    let h = -logp.iter().map(|&l| l.exp() * l).sum::<f64>();
    let g = logp.iter().map(|&l| -l.exp() * (l + h)).collect();
    (h, g)
}

/// `KL(pi || q)` and `dKL/dz_k = pi_k (log pi_k - log q_k - KL)`.
pub(crate) fn kl_logit_grad(logits: &[f64], base_logits: &[f64]) -> (f64, Vec<f64>) {
    let logp = log_softmax(logits);
    let logq = log_softmax(base_logits);
    let kl = logp
        .iter()
        .zip(&logq)
        .map(|(&lp, &lq)| lp.exp() * (lp - lq))
        .sum::<f64>();
    let g = logp
        .iter()
        .zip(&logq)
        .map(|(&lp, &lq)| lp.exp() * (lp - lq - kl))
        .collect();
    (kl, g)
}
