//! Worked examples checked against independent oracles: closed forms,
//! dense eigen-solves, 1-D transport formulas and Monte-Carlo rollouts.

mod common;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use wail_core::baselines::{train_bc, BcConfig};
use wail_core::env::build_environment;
use wail_core::harness::config::{Algorithm, RunConfig};
use wail_core::harness::eval::{compute_references, evaluate};
use wail_core::harness::grid::{demonstrations, prepare, run_cell};
use wail_core::harness::pca::pca_fit;
use wail_core::mdp::{
    causal_entropy, expected_reward, occupancy_from_policy, sample_trajectories, soft_value_iteration, SoftmaxPolicy, TabularMdp,
};
use wail_core::ot::{reg_ot_fit, w1_dual_lp, w1_primal_lp, Batch, DiscreteMeasurePair, DualRegularization, GroundMetric};
use wail_core::policy_opt::{soft_objective, StepSchedule};
use wail_core::reward::{PotentialModel, SupportPoint};
use wail_core::wail::{train_wail, ExpertData, WailConfig};

use common::{random_masses, random_policy, rng, small_mdp};

/// W1 on the real line is the L1 distance between the two CDFs.
fn w1_on_line(points: &[f64], src: &[f64], tgt: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].total_cmp(&points[b]));
    let (mut fs, mut ft, mut total) = (0.0, 0.0, 0.0);
    for w in order.windows(2) {
        fs += src[w[0]];
        ft += tgt[w[0]];
        total += (fs - ft).abs() * (points[w[1]] - points[w[0]]);
    }
    total
}

fn line_metric(points: &[f64]) -> GroundMetric {
    let n = points.len();
    let src = points.iter().enumerate().map(|(i, &x)| SupportPoint::new(i, vec![x])).collect();
    let tgt = points.iter().enumerate().map(|(i, &x)| SupportPoint::new(n + i, vec![x])).collect();
    GroundMetric::from_points(src, tgt, 1.0).unwrap()
}

#[test]
fn transport_on_a_line_matches_cdf_formula() {
    let pair = DiscreteMeasurePair::new(vec![0.0, 0.5, 0.5], vec![0.5, 0.5, 0.0]).unwrap();
    let (v, _) = w1_primal_lp(&pair, &line_metric(&[0.0, 1.0, 2.0])).unwrap();
    assert!((v - 1.0).abs() < 1e-12);

    let mut r = rng(11);
    for _ in 0..30 {
        let n = r.gen_range(2..25);
        let points: Vec<f64> = (0..n).map(|_| r.gen_range(-3.0..3.0)).collect();
        let (src, tgt) = (random_masses(n, &mut r), random_masses(n, &mut r));
        let metric = line_metric(&points);
        let pair = DiscreteMeasurePair::new(src.clone(), tgt.clone()).unwrap();
        let oracle = w1_on_line(&points, &src, &tgt);
        let (primal, _) = w1_primal_lp(&pair, &metric).unwrap();
        let (dual, _) = w1_dual_lp(&pair, &metric).unwrap();
        assert!((primal - oracle).abs() < 1e-9, "{primal} vs {oracle}");
        assert!((dual - oracle).abs() < 1e-6, "{dual} vs {oracle}");
    }
}

#[test]
fn tiny_instance_l2_fit_reaches_w1() {
    let points = [0.0, 0.4, 1.0];
    let pair = DiscreteMeasurePair::new(vec![0.6, 0.4, 0.0], vec![0.0, 0.3, 0.7]).unwrap();
    let metric = line_metric(&points);
    let w1 = w1_on_line(&points, pair.source(), pair.target());
    let reg = DualRegularization::l2(0.01).unwrap();
    let (_, trace) = reg_ot_fit(&pair, &metric, &reg, PotentialModel::tabular(6), 5000, 0.01, Batch::Full, 0).unwrap();
    let value = *trace.last().unwrap();
    assert!((value - w1).abs() <= 0.05 * w1, "{value} vs {w1}");
}

#[test]
fn tabular_fit_recovers_an_optimal_potential() {
    let mut r = rng(5);
    let (n, m) = (4, 3);
    let (pair, metric) = common::random_instance(n, m, 2, &mut r);
    let (w1, _) = w1_primal_lp(&pair, &metric).unwrap();
    let reg = DualRegularization::l2(1e-3).unwrap();
    let (model, _) = reg_ot_fit(&pair, &metric, &reg, PotentialModel::tabular(n + m), 50_000, 1e-3, Batch::Full, 0).unwrap();
    let fitted: Vec<f64> = model.params().to_vec();
    let diameter = (0..n + m).flat_map(|u| (0..n + m).map(move |v| (u, v))).map(|(u, v)| metric.union_dist(u, v)).fold(0.0, f64::max);

    // Optimal means near-feasible and attaining W1.
    let (fs, ft) = fitted.split_at(n);
    let value: f64 = ft.iter().zip(pair.target()).map(|(v, w)| v * w).sum::<f64>() - fs.iter().zip(pair.source()).map(|(v, w)| v * w).sum::<f64>();
    let mut violation: f64 = 0.0;
    for i in 0..n {
        for j in 0..m {
            violation = violation.max(ft[j] - fs[i] - metric.dist(i, j));
        }
    }
    assert!(violation <= 0.05 * diameter, "violation {violation}");
    assert!((value - w1).abs() <= 0.05 * diameter, "{value} vs {w1}");
}

#[test]
fn soft_vi_closed_form_and_optimality() {
    let bandit = TabularMdp::new(1, 2, vec![1.0, 1.0], vec![1.0], 1e-9, Some(vec![1.0, 0.0]), vec![vec![0.0]], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let p = soft_value_iteration(&bandit, &[1.0, 0.0], 1.0, 1e-12).unwrap().probs(0);
    assert!((p[0] - 0.7311).abs() < 1e-4 && (p[1] - 0.2689).abs() < 1e-4);

    let lambda = 0.3;
    let mut r = rng(21);
    for seed in 0..5 {
        let mdp = small_mdp(12, 3, 0.9, seed);
        let reward = mdp.true_reward().unwrap().to_vec();
        let best = soft_objective(&mdp, &soft_value_iteration(&mdp, &reward, lambda, 1e-12).unwrap(), &reward, lambda).unwrap();
        for _ in 0..50 {
            let other = random_policy(12, 3, 3.0, &mut r);
            assert!(best >= soft_objective(&mdp, &other, &reward, lambda).unwrap() - 1e-6);
        }
    }
}

#[test]
fn entropy_and_expected_reward_match_rollouts() {
    let mdp = small_mdp(6, 4, 0.9, 3);
    let uniform = SoftmaxPolicy::uniform(6, 4);
    assert!((causal_entropy(&mdp, &uniform).unwrap() - 4f64.ln() / 0.1).abs() < 1e-9);

    let pi = random_policy(6, 4, 1.5, &mut rng(4));
    let reward = mdp.true_reward().unwrap().to_vec();
    let rho = occupancy_from_policy(&mdp, &pi).unwrap();
    let exact = expected_reward(&rho, &reward).unwrap();

    // Discounted returns of independent episodes from the start distribution.
    let mut r = rng(9);
    let start = WeightedIndex::new(mdp.start()).unwrap();
    let n = 100_000;
    let mut returns = Vec::with_capacity(n);
    for _ in 0..n {
        let (mut s, mut g, mut total) = (start.sample(&mut r), 1.0, 0.0);
        while g > 1e-12 {
            let a = pi.sample_action(s, &mut r);
            total += g * reward[mdp.pair_index(s, a)];
            s = WeightedIndex::new(mdp.next(s, a)).unwrap().sample(&mut r);
            g *= mdp.gamma();
        }
        returns.push(total * (1.0 - mdp.gamma()));
    }
    let mean = returns.iter().sum::<f64>() / n as f64;
    let se = (returns.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 * (n - 1) as f64)).sqrt();
    assert!((mean - exact).abs() <= 3.0 * se, "{mean} vs {exact} (se {se})");

    // Entropy against its definition on a Monte-Carlo occupancy.
    let trajs = sample_trajectories(&mdp, &pi, 200_000, 10_000, 5).unwrap();
    let mc = wail_core::mdp::empirical_occupancy(&mdp, &trajs).unwrap();
    let logp = pi.log_prob_table();
    let h_mc = -mc.as_slice().iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>() / (1.0 - mdp.gamma());
    let h = causal_entropy(&mdp, &pi).unwrap();
    assert!((h - h_mc).abs() / h < 0.01, "{h} vs {h_mc}");
}

#[test]
fn pca_eigenvalues_match_dense_solver() {
    let mut r = rng(8);
    let data: Vec<Vec<f64>> = (0..200).map(|_| (0..10).map(|k| r.gen_range(-1.0..1.0) * (1.0 + k as f64)).collect()).collect();
    let pca = pca_fit(&data).unwrap();
    let n = data.len() as f64;
    let mean: Vec<f64> = (0..10).map(|k| data.iter().map(|x| x[k]).sum::<f64>() / n).collect();
    let cov = DMatrix::from_fn(10, 10, |i, j| data.iter().map(|x| (x[i] - mean[i]) * (x[j] - mean[j])).sum::<f64>() / (n - 1.0));
    let mut eig: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    for k in 0..2 {
        assert!((pca.eigenvalues[k] - eig[k]).abs() <= 1e-6 * eig[0].max(1.0), "{} vs {}", pca.eigenvalues[k], eig[k]);
    }
}

#[test]
fn schedule_partial_sums() {
    let s = StepSchedule::new(0.01, 2.5).unwrap();
    assert!((s.delta(4) - 3.125e-4).abs() < 1e-15);
    assert_eq!(StepSchedule::new(0.01, 0.0).unwrap().delta(7), 0.01);
    let partial = s.sqrt_sum(1_000_000);
    let bound = s.sqrt_sum_bound().unwrap();
    assert!(partial.is_finite() && partial <= bound);
}

#[test]
fn expert_reaches_goal_from_every_start() {
    let cfg = RunConfig::default();
    let mdp = build_environment(&cfg.env).unwrap();
    let expert = soft_value_iteration(&mdp, mdp.true_reward().unwrap(), cfg.expert.lambda, 1e-10).unwrap();
    let goal = mdp.n_states() - 1;
    // The shortest path on a 5x5 grid is at most 8 moves; allow generous slack.
    let mut r = rng(2);
    let start = WeightedIndex::new(mdp.start()).unwrap();
    let trials = 1000;
    let reached = (0..trials)
        .filter(|_| {
            let mut s = start.sample(&mut r);
            for _ in 0..16 {
                if s == goal {
                    return true;
                }
                let a = expert.sample_action(s, &mut r);
                s = WeightedIndex::new(mdp.next(s, a)).unwrap().sample(&mut r);
            }
            s == goal
        })
        .count();
    assert!(reached as f64 >= 0.95 * trials as f64, "{reached}/{trials}");
}

#[test]
fn scaled_score_of_references() {
    let cfg = RunConfig::default();
    let prep = prepare(&cfg).unwrap();
    let refs = compute_references(&prep.mdp, &prep.expert, 77).unwrap();
    let expert = evaluate(&prep.mdp, &prep.expert, 500, 123, &refs).unwrap();
    let random = evaluate(&prep.mdp, &SoftmaxPolicy::uniform(prep.mdp.n_states(), prep.mdp.n_actions()), 500, 123, &refs).unwrap();
    assert!((expert.scaled - 1.0).abs() <= 0.1, "{}", expert.scaled);
    assert!(random.scaled.abs() <= 0.1, "{}", random.scaled);
}

#[test]
fn wail_copies_an_unambiguous_expert() {
    // Two states, two actions; action 0 stays, action 1 switches.
    let transition = vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
    let mdp = TabularMdp::new(2, 2, transition, vec![0.5, 0.5], 0.9, None, vec![vec![0.0], vec![1.0]], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let expert = SoftmaxPolicy::deterministic(2, &[0, 0]);
    let data = ExpertData::Occupancy(occupancy_from_policy(&mdp, &expert).unwrap());
    let out = train_wail(&mdp, &data, &WailConfig { iterations: 300, early_stop: false, ..WailConfig::default() }).unwrap();
    for s in 0..2 {
        assert!(out.policy.probs(s)[0] >= 0.95, "state {s}: {:?}", out.policy.probs(s));
    }
}

#[test]
fn wail_learns_from_one_gridworld_demonstration() {
    let cfg = RunConfig::default();
    let prep = prepare(&cfg).unwrap();
    let demos = demonstrations(&prep, &cfg, 1, 0).unwrap();
    let out = run_cell(&prep, &cfg, Algorithm::Wail, &demos, 0).unwrap();
    assert!(out.eval.scaled >= 0.9, "scaled {}", out.eval.scaled);
}

#[test]
fn gail_learns_from_ten_gridworld_demonstrations() {
    let cfg = RunConfig::default();
    let prep = prepare(&cfg).unwrap();
    let demos = demonstrations(&prep, &cfg, 10, 0).unwrap();
    let out = run_cell(&prep, &cfg, Algorithm::Gail, &demos, 0).unwrap();
    assert!(out.eval.scaled >= 0.8, "scaled {}", out.eval.scaled);
}

#[test]
fn bc_matches_empirical_conditionals() {
    let mdp = build_environment(&RunConfig::default().env).unwrap();
    let trajs = sample_trajectories(&mdp, &random_policy(mdp.n_states(), mdp.n_actions(), 1.0, &mut rng(1)), 30, 50, 3).unwrap();
    let counts = wail_core::baselines::action_counts(mdp.n_states(), mdp.n_actions(), &trajs).unwrap();
    let policy = train_bc(mdp.n_states(), mdp.n_actions(), &trajs, &BcConfig { steps: 5000, lr: 1.0 }).unwrap();
    for s in 0..mdp.n_states() {
        let row = &counts[s * 4..s * 4 + 4];
        let total: f64 = row.iter().sum();
        let p = policy.probs(s);
        for a in 0..4 {
            let expected = if total > 0.0 { row[a] / total } else { 0.25 };
            // Unseen actions in visited states can only approach zero.
            let tol = if total > 0.0 && row[a] == 0.0 { 0.02 } else { 1e-3 };
            assert!((p[a] - expected).abs() <= tol, "state {s} action {a}: {} vs {expected}", p[a]);
        }
    }
}
