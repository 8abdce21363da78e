//! GAIL and behavior cloning on their own: train both from a few
//! demonstrations and inspect the discriminator's surrogate reward.
//!
//! cargo run --release --example baselines -- [dataset_size] [seed]

use wail_core::baselines::{surrogate_table, train_bc, train_gail, BcConfig, GailConfig};
use wail_core::harness::config::RunConfig;
use wail_core::harness::eval::evaluate;
use wail_core::harness::grid::{demonstrations, prepare};
use wail_core::wail::ExpertData;

fn main() -> wail_core::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let (size, seed) = (args.first().copied().unwrap_or(4) as usize, args.get(1).copied().unwrap_or(0));
    let cfg = RunConfig::default();
    let prep = prepare(&cfg)?;
    let demos = demonstrations(&prep, &cfg, size, seed)?;

    let bc = train_bc(prep.mdp.n_states(), prep.mdp.n_actions(), &demos, &BcConfig::default())?;
    let bc_eval = evaluate(&prep.mdp, &bc, cfg.eval.n_eval, cfg.eval.seed, &prep.references)?;
    println!("bc   scaled {:.3}", bc_eval.scaled);

    let gail_cfg = GailConfig { seed, ..cfg.gail.clone() };
    let gail = train_gail(&prep.mdp, &ExpertData::Trajectories(demos), &gail_cfg)?;
    let gail_eval = evaluate(&prep.mdp, &gail.policy, cfg.eval.n_eval, cfg.eval.seed, &prep.references)?;
    println!("gail scaled {:.3} after {} iterations", gail_eval.scaled, gail.log.rows.len());

    let table = surrogate_table(&gail.disc, &prep.mdp)?;
    let (lo, hi) = table.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    println!("surrogate reward -log D ranges over [{lo:.3}, {hi:.3}]");
    Ok(())
}
