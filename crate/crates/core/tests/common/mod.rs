#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wail_core::env::{random_mdp, EnvSpec};
use wail_core::mdp::{SoftmaxPolicy, TabularMdp};
use wail_core::ot::{DiscreteMeasurePair, GroundMetric};
use wail_core::reward::SupportPoint;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Positive weights in `[0.1, 1)`, normalized.
pub fn random_masses(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Two point clouds in the unit cube of dimension `dim`, ids laid out as
/// `0..n_src` then `n_src..n_src + n_tgt`.
pub fn random_instance(n_src: usize, n_tgt: usize, dim: usize, rng: &mut impl Rng) -> (DiscreteMeasurePair, GroundMetric) {
    let mut cloud = |offset: usize, n: usize| -> Vec<SupportPoint> {
        (0..n).map(|i| SupportPoint::new(offset + i, (0..dim).map(|_| rng.gen::<f64>()).collect())).collect()
    };
    let src = cloud(0, n_src);
    let tgt = cloud(n_src, n_tgt);
    let metric = GroundMetric::from_points(src, tgt, 1.0).unwrap();
    let pair = DiscreteMeasurePair::new(random_masses(n_src, rng), random_masses(n_tgt, rng)).unwrap();
    (pair, metric)
}

pub fn random_policy(n_states: usize, n_actions: usize, scale: f64, rng: &mut impl Rng) -> SoftmaxPolicy {
    let logits = (0..n_states * n_actions).map(|_| rng.gen_range(-scale..scale)).collect();
    SoftmaxPolicy::from_logits(n_states, n_actions, logits).unwrap()
}

pub fn small_mdp(n_states: usize, n_actions: usize, gamma: f64, seed: u64) -> TabularMdp {
    random_mdp(n_states, n_actions, gamma, seed).unwrap()
}

pub fn gridworld() -> EnvSpec {
    EnvSpec::gridworld(5, 5)
}

/// `|a - b| / max(|a|, |b|, floor)` over whole vectors.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(floor)
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}
