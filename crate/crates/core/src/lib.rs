//! Wasserstein adversarial imitation learning on tabular MDPs.
//!
//! The reward is a Kantorovich potential fitted by ascent on a regularized
//! optimal-transport dual between the policy's and the expert's
//! state-action occupancies; the policy follows it with KL-constrained
//! natural-gradient steps. Exact oracles (a min-cost-flow and a Lipschitz
//! dual LP for W1, soft value iteration for entropy-regularized RL) sit next
//! to the learning code so that each part can be checked against them.
//!
//! Module map:
//!
//! | module | contents |
//! |---|---|
//! | [`mdp`] | tabular MDPs, occupancy measures, sampling, soft value iteration |
//! | [`ot`] | ground metrics, exact W1, regularized dual objective and fit |
//! | [`reward`] | tabular / linear / MLP potentials with analytic gradients |
//! | [`policy_opt`] | entropy-regularized policy gradient, KL-constrained step |
//! | [`wail`] | the alternating training loop and its convergence monitor |
//! | [`baselines`] | GAIL and behavior cloning |
//! | [`env`], [`harness`] | environments, experts, evaluation, PCA surfaces, grids |

pub mod baselines;
pub mod env;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod ot;
pub mod policy_opt;
pub mod reward;
pub mod runlog;
pub mod wail;

pub use error::{Error, Result};
