//! Train WAIL and GAIL on one demonstration, then export both learned
//! rewards over the 2-D PCA plane of the expert's state-action embeddings.
//!
//! cargo run --release --example reward_surface -- [out_dir]

use std::path::PathBuf;

use wail_core::harness::config::{Algorithm, RunConfig};
use wail_core::harness::grid::{demonstrations, prepare, run_cell};
use wail_core::harness::surface::{expert_plane, reward_surface, total_variation};

fn main() -> wail_core::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "surfaces".into()));
    let cfg = RunConfig::default();
    let prep = prepare(&cfg)?;
    let demos = demonstrations(&prep, &cfg, 1, 0)?;
    let (pca, bounds) = expert_plane(&prep.mdp, &demos, cfg.surface.margin)?;
    println!("PCA eigenvalues {:.4} {:.4}", pca.eigenvalues[0], pca.eigenvalues[1]);

    for algo in [Algorithm::Wail, Algorithm::Gail] {
        let cell = run_cell(&prep, &cfg, algo, &demos, 0)?;
        let reward = cell.reward.expect("adversarial methods learn a reward");
        let surface = reward_surface(&prep.mdp, |p| reward.score(p), &pca, cfg.surface.grid_n, &bounds)?;
        let path = out.join(format!("{}.csv", algo.name()));
        surface.save(&path)?;
        println!("{:<4} total variation {:.4}{}  -> {}", algo.name(), total_variation(&surface), if surface.constant { " (constant)" } else { "" }, path.display());
    }
    Ok(())
}
