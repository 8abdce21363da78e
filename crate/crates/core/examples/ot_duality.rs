//! Exact 1-Wasserstein distance between two random point clouds, solved both
//! as a min-cost flow and as the Lipschitz-constrained dual LP.
//!
//! cargo run --release --example ot_duality -- [n_src] [n_tgt] [seed]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wail_core::ot::{w1_dual_lp, w1_primal_lp, DiscreteMeasurePair, GroundMetric};
use wail_core::reward::SupportPoint;

fn main() -> wail_core::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let (n, m, seed) = (args.first().copied().unwrap_or(12), args.get(1).copied().unwrap_or(9), args.get(2).copied().unwrap_or(0));
    let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
    let mut cloud = |offset: usize, k: usize| -> Vec<SupportPoint> {
        (0..k).map(|i| SupportPoint::new(offset + i, vec![rng.gen(), rng.gen()])).collect()
    };
    let (src, tgt) = (cloud(0, n), cloud(n, m));
    let metric = GroundMetric::from_points(src, tgt, 1.0)?;
    let weights = |k: usize, rng: &mut ChaCha8Rng| (0..k).map(|_| rng.gen_range(0.1..1.0)).collect::<Vec<f64>>();
    let pair = DiscreteMeasurePair::normalized(weights(n, &mut rng), weights(m, &mut rng))?;

    let (primal, plan) = w1_primal_lp(&pair, &metric)?;
    let (dual, potential) = w1_dual_lp(&pair, &metric)?;
    println!("W1 primal {primal:.10}");
    println!("W1 dual   {dual:.10}");
    println!("gap       {:.2e}", (primal - dual).abs());
    println!("plan support {} of {} cells", plan.iter().filter(|&&p| p > 1e-12).count(), n * m);

    let mut worst = f64::NEG_INFINITY;
    for u in 0..n + m {
        for v in 0..n + m {
            worst = worst.max(potential[u] - potential[v] - metric.union_dist(u, v));
        }
    }
    println!("largest Lipschitz violation of the potential {worst:.2e}");
    Ok(())
}
