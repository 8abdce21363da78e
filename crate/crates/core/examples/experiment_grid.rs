//! A small algorithm x dataset-size x seed grid with a summary table.
//!
//! cargo run --release --example experiment_grid -- [out_dir]

use std::path::PathBuf;

use wail_core::harness::config::RunConfig;
use wail_core::harness::grid::run_experiment_grid;

fn main() -> wail_core::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "grid_runs".into()));
    let mut cfg = RunConfig::default();
    cfg.grid.dataset_sizes = vec![1, 4];
    cfg.seeds = vec![0, 1];
    cfg.wail.iterations = 300;
    cfg.gail.iterations = 300;
    let report = run_experiment_grid(&cfg, Some(&out))?;
    println!("{:<5} {:>4} {:>4} {:>8}", "algo", "n", "seed", "scaled");
    for row in &report.rows {
        println!("{:<5} {:>4} {:>4} {:>8.3}", row.algorithm.name(), row.dataset_size, row.seed, row.scaled);
    }
    for f in &report.failures {
        println!("failed {} n={} seed={}: {}", f.algorithm.name(), f.dataset_size, f.seed, f.error);
    }
    println!("summary written under {}", out.display());
    Ok(())
}
