//! KL-constrained natural-gradient steps against a fixed reward, with the
//! decaying step schedule, converging toward the soft-RL optimum.
//!
//! cargo run --release --example trust_region -- [decay]

use wail_core::env::{build_environment, EnvSpec};
use wail_core::mdp::{soft_value_iteration, SoftmaxPolicy};
use wail_core::policy_opt::{entropy_reg_policy_gradient, kl_constrained_step, soft_objective, StepSchedule};

fn main() -> wail_core::Result<()> {
    let decay: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.0);
    let lambda = 0.1;
    let mdp = build_environment(&EnvSpec::gridworld(4, 4))?;
    let reward = mdp.true_reward().expect("gridworld has a reward").to_vec();
    let optimum = soft_objective(&mdp, &soft_value_iteration(&mdp, &reward, lambda, 1e-12)?, &reward, lambda)?;

    let schedule = StepSchedule::new(0.05, decay)?;
    let mut policy = SoftmaxPolicy::uniform(mdp.n_states(), mdp.n_actions());
    for k in 1..=400 {
        let report = entropy_reg_policy_gradient(&mdp, &policy, &reward, lambda)?;
        let step = kl_constrained_step(&mdp, &policy, &report, schedule.delta(k))?;
        policy = step.policy;
        if k == 1 || k % 50 == 0 {
            let value = soft_objective(&mdp, &policy, &reward, lambda)?;
            println!("step {k:>3}  delta {:.4}  kl {:.5}  objective {value:.6}  gap {:.2e}", schedule.delta(k), step.kl, optimum - value);
        }
    }
    match schedule.sqrt_sum_bound() {
        Some(b) => println!("sum of sqrt(delta_k) is bounded by {b:.4}"),
        None => println!("sum of sqrt(delta_k) diverges for decay {decay}"),
    }
    Ok(())
}
