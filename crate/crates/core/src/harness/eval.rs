//! Scaled performance: 0 at the random policy, 1 at the expert.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{default_max_len, sample_trajectories, SoftmaxPolicy, TabularMdp, Trajectory};

/// Rollouts used for each reference mean.
pub const REFERENCE_ROLLOUTS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReferences {
    pub expert_ref: f64,
    pub random_ref: f64,
}

impl EvalReferences {
    pub fn new(expert_ref: f64, random_ref: f64) -> Result<Self> {
        if !expert_ref.is_finite() || !random_ref.is_finite() {
            return Err(Error::Invalid("references must be finite".into()));
        }
        if expert_ref == random_ref {
            return Err(Error::Invalid("expert and random references coincide".into()));
        }
        Ok(Self { expert_ref, random_ref })
    }

    pub fn scale(&self, mean: f64) -> f64 {
        (mean - self.random_ref) / (self.expert_ref - self.random_ref)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub mean: f64,
    pub std: f64,
    pub scaled: f64,
}

/// Undiscounted true-reward sum of one restart-chain trajectory.
pub fn trajectory_return(mdp: &TabularMdp, traj: &Trajectory) -> Result<f64> {
    let reward = mdp.true_reward().ok_or_else(|| Error::Invalid("mdp has no true reward".into()))?;
    Ok(traj.steps.iter().map(|&(s, a)| reward[mdp.pair_index(s, a)]).sum())
}

/// Mean and population standard deviation of returns over `n` rollouts.
pub fn rollout_returns(mdp: &TabularMdp, policy: &SoftmaxPolicy, n: usize, seed: u64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::Invalid("n_eval must be positive".into()));
    }
    let trajs = sample_trajectories(mdp, policy, n, default_max_len(mdp.gamma()), seed)?;
    let returns = trajs.iter().map(|t| trajectory_return(mdp, t)).collect::<Result<Vec<_>>>()?;
    let mean = returns.iter().sum::<f64>() / n as f64;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n as f64;
    Ok((mean, var.sqrt()))
}

/// Expert and zero-logit references from [`REFERENCE_ROLLOUTS`] rollouts each.
pub fn compute_references(mdp: &TabularMdp, expert: &SoftmaxPolicy, seed: u64) -> Result<EvalReferences> {
    let (expert_ref, _) = rollout_returns(mdp, expert, REFERENCE_ROLLOUTS, seed)?;
    let random = SoftmaxPolicy::uniform(mdp.n_states(), mdp.n_actions());
    let (random_ref, _) = rollout_returns(mdp, &random, REFERENCE_ROLLOUTS, seed)?;
    EvalReferences::new(expert_ref, random_ref)
}

pub fn evaluate(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    n_eval: usize,
    seed: u64,
    refs: &EvalReferences,
) -> Result<EvalResult> {
    let refs = EvalReferences::new(refs.expert_ref, refs.random_ref)?;
    let (mean, std) = rollout_returns(mdp, policy, n_eval, seed)?;
    Ok(EvalResult { mean, std, scaled: refs.scale(mean) })
}
