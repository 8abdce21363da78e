//! Occupancy measures and the soft-RL oracle on a gridworld: solve the
//! entropy-regularized optimum, check the Bellman flow, recover the policy
//! from its occupancy and compare against a Monte-Carlo estimate.
//!
//! cargo run --release --example occupancy -- [lambda]

use wail_core::env::{build_environment, EnvSpec};
use wail_core::mdp::{
    causal_entropy, empirical_occupancy, occupancy_from_policy, policy_from_occupancy, sample_trajectories, soft_value_iteration,
};

fn main() -> wail_core::Result<()> {
    let lambda: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let mdp = build_environment(&EnvSpec::gridworld(5, 5))?;
    let reward = mdp.true_reward().expect("gridworld has a reward").to_vec();

    let policy = soft_value_iteration(&mdp, &reward, lambda, 1e-10)?;
    let rho = occupancy_from_policy(&mdp, &policy)?;
    println!("lambda {lambda}: mass {:.12}, flow residual {:.2e}", rho.total_mass(), rho.flow_residual(&mdp));
    println!("causal entropy {:.4}", causal_entropy(&mdp, &policy)?);

    let recovered = policy_from_occupancy(&rho)?;
    let gap = policy
        .prob_table()
        .iter()
        .zip(recovered.prob_table())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("policy -> occupancy -> policy max deviation {gap:.2e}");

    let trajs = sample_trajectories(&mdp, &policy, 20_000, 10_000, 1)?;
    let mc = empirical_occupancy(&mdp, &trajs)?;
    let l1: f64 = rho.as_slice().iter().zip(mc.as_slice()).map(|(a, b)| (a - b).abs()).sum();
    println!("Monte-Carlo estimate from {} restart trajectories: L1 distance {l1:.4}", trajs.len());

    println!("state marginal (row = y):");
    let marg = rho.state_marginal();
    for row in marg.chunks(5) {
        println!("  {}", row.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(" "));
    }
    Ok(())
}
