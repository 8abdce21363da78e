//! Soft-optimal experts and their demonstrations.

use crate::error::{Error, Result};
use crate::mdp::{sample_trajectories, soft_value_iteration, SoftmaxPolicy, TabularMdp, Trajectory};

/// Demonstration length cap used when none is given.
pub const DEFAULT_TRAJ_LEN: usize = 50;

/// Soft value iteration on the true reward, then `n_traj` seeded rollouts of
/// at most `traj_len` steps.
pub fn make_expert(
    mdp: &TabularMdp,
    lambda_expert: f64,
    n_traj: usize,
    traj_len: usize,
    seed: u64,
) -> Result<(SoftmaxPolicy, Vec<Trajectory>)> {
    let reward = mdp.true_reward().ok_or_else(|| Error::Invalid("expert needs a true reward".into()))?;
    if traj_len == 0 {
        return Err(Error::Invalid("traj_len must be positive".into()));
    }
    let policy = soft_value_iteration(mdp, reward, lambda_expert, 1e-10)?;
    let demos = sample_trajectories(mdp, &policy, n_traj, traj_len, seed)?;
    Ok((policy, demos))
}
