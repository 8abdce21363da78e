//! Fit a tabular Kantorovich potential by ascent on the L2- and
//! entropy-regularized dual and compare the values with exact W1.
//!
//! cargo run --release --example reg_ot_fit -- [epsilon]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wail_core::ot::{reg_ot_fit, w1_primal_lp, Batch, DiscreteMeasurePair, DualRegularization, GroundMetric};
use wail_core::reward::{PotentialModel, SupportPoint};

fn main() -> wail_core::Result<()> {
    let epsilon: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n, m) = (8, 6);
    let mut cloud = |offset: usize, k: usize| -> Vec<SupportPoint> {
        (0..k).map(|i| SupportPoint::new(offset + i, vec![rng.gen(), rng.gen()])).collect()
    };
    let (src, tgt) = (cloud(0, n), cloud(n, m));
    let metric = GroundMetric::from_points(src, tgt, 1.0)?;
    let pair = DiscreteMeasurePair::normalized(vec![1.0; n], vec![1.0; m])?;
    let (w1, _) = w1_primal_lp(&pair, &metric)?;
    println!("exact W1 {w1:.6}");

    let lr = epsilon * n.min(m) as f64;
    for (name, reg) in [("L2", DualRegularization::l2(epsilon)?), ("entropic", DualRegularization::entropic(epsilon)?)] {
        let (_, trace) = reg_ot_fit(&pair, &metric, &reg, PotentialModel::tabular(n + m), 20_000, lr, Batch::Full, 0)?;
        let last = *trace.last().unwrap();
        println!("{name:<9} eps {epsilon}: dual value {last:.6} (gap to W1 {:+.4})", last - w1);
    }
    Ok(())
}
