//! Train WAIL on a 5x5 gridworld from a single expert trajectory and report
//! the scaled score alongside GAIL and behavior cloning.
//!
//! cargo run --release --example train_wail -- [seed] [iterations]

use wail_core::harness::config::{Algorithm, RunConfig};
use wail_core::harness::grid::{demonstrations, prepare, run_cell};

fn main() -> wail_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let iterations: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(500);

    let mut cfg = RunConfig::default();
    cfg.wail.iterations = iterations;
    cfg.gail.iterations = iterations;
    let prep = prepare(&cfg)?;
    println!("references: expert {:.3}, random {:.3}", prep.references.expert_ref, prep.references.random_ref);

    let demos = demonstrations(&prep, &cfg, 1, seed)?;
    println!("demonstration: {} state-action pairs", demos[0].len());
    for algo in [Algorithm::Wail, Algorithm::Gail, Algorithm::Bc] {
        let start = std::time::Instant::now();
        let out = run_cell(&prep, &cfg, algo, &demos, seed)?;
        println!(
            "{:<4} scaled {:>6.3}  mean {:>7.3}  iterations {:>4}  {:.1?}{}",
            algo.name(),
            out.eval.scaled,
            out.eval.mean,
            out.log.rows.len(),
            start.elapsed(),
            out.divergence.map(|d| format!("  diverged: {d}")).unwrap_or_default()
        );
    }
    Ok(())
}
