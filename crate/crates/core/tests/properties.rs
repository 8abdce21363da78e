//! Property tests for the structural invariants of each module.

mod common;

use proptest::prelude::*;

use wail_core::baselines::{gail_discriminator_step, surrogate_table, Discriminator, SampleSet};
use wail_core::harness::eval::EvalReferences;
use wail_core::harness::pca::pca_fit;
use wail_core::mdp::{
    causal_entropy, occupancy_from_policy, policy_from_occupancy, soft_value_iteration, MdpFile, SoftmaxPolicy, TabularMdp,
};
use wail_core::ot::{
    reg_dual_objective, reg_ot_fit, w1_dual_lp, w1_primal_lp, Batch, DiscreteMeasurePair, DualRegularization, GroundMetric,
};
use wail_core::policy_opt::{entropy_reg_policy_gradient, kl_constrained_step, natural_direction, weighted_kl};
use wail_core::reward::{mdp_points, ModelForm, PotentialModel, SupportPoint};
use wail_core::wail::{train_wail, ExpertData, WailConfig};

use common::{random_instance, random_policy, rng, small_mdp};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

fn permute_actions(mdp: &TabularMdp, perm: &[usize]) -> TabularMdp {
    let f = mdp.to_file();
    let transition = f.transition.iter().map(|per_state| perm.iter().map(|&a| per_state[a].clone()).collect()).collect();
    let true_reward = f.true_reward.as_ref().map(|rows| rows.iter().map(|row| perm.iter().map(|&a| row[a]).collect()).collect());
    let action_embed = perm.iter().map(|&a| f.action_embed[a].clone()).collect();
    TabularMdp::from_file(MdpFile { transition, true_reward, action_embed, ..f }).unwrap()
}

fn permute_logits(policy: &SoftmaxPolicy, perm: &[usize]) -> SoftmaxPolicy {
    let na = policy.n_actions();
    let logits = (0..policy.n_states()).flat_map(|s| perm.iter().map(move |&a| (s, a))).map(|(s, a)| policy.logits()[s * na + a]).collect();
    SoftmaxPolicy::from_logits(policy.n_states(), na, logits).unwrap()
}

fn metric_pair(seed: u64, n: usize, m: usize) -> (DiscreteMeasurePair, GroundMetric) {
    random_instance(n, m, 2, &mut rng(seed))
}

proptest! {
    #![proptest_config(config(32))]

    #[test]
    fn occupancy_satisfies_bellman_flow(seed in 0u64..10_000, ns in 1usize..30, na in 1usize..5, gamma in 0.05f64..0.99) {
        let mdp = small_mdp(ns, na, gamma, seed);
        let pi = random_policy(ns, na, 3.0, &mut rng(seed + 1));
        let rho = occupancy_from_policy(&mdp, &pi).unwrap();
        prop_assert!((rho.total_mass() - 1.0).abs() <= 1e-8);
        prop_assert!(rho.flow_residual(&mdp) <= 1e-8);
    }

    #[test]
    fn policy_occupancy_round_trip(seed in 0u64..10_000, ns in 1usize..30, na in 1usize..5, gamma in 0.05f64..0.99) {
        let mdp = small_mdp(ns, na, gamma, seed);
        let pi = random_policy(ns, na, 3.0, &mut rng(seed + 1));
        let rho = occupancy_from_policy(&mdp, &pi).unwrap();
        let back = policy_from_occupancy(&rho).unwrap();
        let marg = rho.state_marginal();
        for s in (0..ns).filter(|&s| marg[s] > 1e-12) {
            for (a, b) in pi.probs(s).iter().zip(back.probs(s)) {
                prop_assert!((a - b).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn entropy_is_invariant_to_action_relabeling(seed in 0u64..10_000, ns in 1usize..15, na in 2usize..5) {
        let mdp = small_mdp(ns, na, 0.9, seed);
        let pi = random_policy(ns, na, 2.0, &mut rng(seed + 1));
        let mut perm: Vec<usize> = (0..na).collect();
        perm.rotate_left(1 + (seed as usize % (na - 1)));
        let h = causal_entropy(&mdp, &pi).unwrap();
        let h2 = causal_entropy(&permute_actions(&mdp, &perm), &permute_logits(&pi, &perm)).unwrap();
        prop_assert!((h - h2).abs() <= 1e-9 * h.abs().max(1.0));
    }

    #[test]
    fn soft_vi_ignores_constant_reward_shift(seed in 0u64..10_000, shift in -5.0f64..5.0, lambda in 0.05f64..2.0) {
        let mdp = small_mdp(8, 3, 0.9, seed);
        let reward = mdp.true_reward().unwrap().to_vec();
        let shifted: Vec<f64> = reward.iter().map(|r| r + shift).collect();
        let a = soft_value_iteration(&mdp, &reward, lambda, 1e-12).unwrap();
        let b = soft_value_iteration(&mdp, &shifted, lambda, 1e-12).unwrap();
        for (x, y) in a.prob_table().iter().zip(b.prob_table()) {
            prop_assert!((x - y).abs() <= 1e-8);
        }
    }

    #[test]
    fn strong_duality(seed in 0u64..10_000, n in 1usize..20, m in 1usize..20) {
        let (pair, metric) = metric_pair(seed, n, m);
        let (primal, _) = w1_primal_lp(&pair, &metric).unwrap();
        let (dual, _) = w1_dual_lp(&pair, &metric).unwrap();
        prop_assert!((primal - dual).abs() <= 1e-6);
    }

    #[test]
    fn w1_metric_axioms(seed in 0u64..10_000, n in 2usize..10) {
        // Three measures on one shared support, so every pair is comparable.
        let mut r = rng(seed);
        let pts: Vec<SupportPoint> = (0..n).map(|i| SupportPoint::new(i, vec![rand::Rng::gen(&mut r), rand::Rng::gen(&mut r)])).collect();
        let metric = GroundMetric::from_points(pts.clone(), pts, 1.0).unwrap();
        let [a, b, c] = [0, 1, 2].map(|_| common::random_masses(n, &mut r));
        let w = |x: &Vec<f64>, y: &Vec<f64>| w1_primal_lp(&DiscreteMeasurePair::new(x.clone(), y.clone()).unwrap(), &metric).unwrap().0;
        prop_assert!(w(&a, &a).abs() <= 1e-6);
        prop_assert!((w(&a, &b) - w(&b, &a)).abs() <= 1e-6);
        prop_assert!(w(&a, &c) <= w(&a, &b) + w(&b, &c) + 1e-6);
    }

    #[test]
    fn l2_penalty_vanishes_on_lipschitz_potentials(seed in 0u64..10_000, n in 1usize..15, m in 1usize..15, eps in 1e-3f64..1.0) {
        let (pair, metric) = metric_pair(seed, n, m);
        let (w1, potential) = w1_dual_lp(&pair, &metric).unwrap();
        // Shrinking a 1-Lipschitz potential keeps it feasible.
        let scaled: Vec<f64> = potential.iter().map(|v| 0.7 * v).collect();
        let (vs, vt) = scaled.split_at(n);
        let linear: f64 = vt.iter().zip(pair.target()).map(|(v, w)| v * w).sum::<f64>()
            - vs.iter().zip(pair.source()).map(|(v, w)| v * w).sum::<f64>();
        let value = reg_dual_objective(vs, vt, &pair, &metric, &DualRegularization::l2(eps).unwrap()).unwrap();
        prop_assert!((value - linear).abs() <= 1e-10);
        let (ps, pt) = potential.split_at(n);
        let at_opt = reg_dual_objective(ps, pt, &pair, &metric, &DualRegularization::l2(eps).unwrap()).unwrap();
        prop_assert!((at_opt - w1).abs() <= 1e-6);
        let entropic = reg_dual_objective(ps, pt, &pair, &metric, &DualRegularization::entropic(eps).unwrap()).unwrap();
        prop_assert!(entropic >= w1 - eps - 1e-9);
    }

    #[test]
    fn dual_objective_is_translation_invariant(seed in 0u64..10_000, n in 1usize..15, m in 1usize..15, c in -10.0f64..10.0) {
        let (pair, metric) = metric_pair(seed, n, m);
        let mut r = rng(seed + 7);
        let vs: Vec<f64> = (0..n).map(|_| rand::Rng::gen_range(&mut r, -1.0..1.0)).collect();
        let vt: Vec<f64> = (0..m).map(|_| rand::Rng::gen_range(&mut r, -1.0..1.0)).collect();
        for reg in [DualRegularization::l2(0.1).unwrap(), DualRegularization::entropic(0.5).unwrap()] {
            let base = reg_dual_objective(&vs, &vt, &pair, &metric, &reg).unwrap();
            let vs2: Vec<f64> = vs.iter().map(|v| v + c).collect();
            let vt2: Vec<f64> = vt.iter().map(|v| v + c).collect();
            let moved = reg_dual_objective(&vs2, &vt2, &pair, &metric, &reg).unwrap();
            prop_assert!((base - moved).abs() <= 1e-10 * (1.0 + c.abs()));
        }
    }

    #[test]
    fn kl_step_respects_trust_region(seed in 0u64..10_000, delta in 1e-4f64..0.1, lambda in 0.0f64..0.5) {
        let mdp = small_mdp(10, 3, 0.9, seed);
        let pi = random_policy(10, 3, 2.0, &mut rng(seed + 1));
        let reward: Vec<f64> = mdp.true_reward().unwrap().to_vec();
        let report = entropy_reg_policy_gradient(&mdp, &pi, &reward, lambda).unwrap();
        let out = kl_constrained_step(&mdp, &pi, &report, delta).unwrap();
        let kl = weighted_kl(&out.policy, &pi, &report.state_weights);
        prop_assert!(kl >= 0.0 && kl <= delta * 1.001);
        prop_assert!(out.surrogate_gain >= -1e-12);
    }

    #[test]
    fn natural_direction_is_gauge_invariant(seed in 0u64..10_000, shift in -20.0f64..20.0, state in 0usize..10) {
        let mdp = small_mdp(10, 3, 0.9, seed);
        let pi = random_policy(10, 3, 2.0, &mut rng(seed + 1));
        let reward = mdp.true_reward().unwrap().to_vec();
        let report = entropy_reg_policy_gradient(&mdp, &pi, &reward, 0.0).unwrap();
        let mut logits = pi.logits().to_vec();
        for v in &mut logits[state * 3..state * 3 + 3] {
            *v += shift;
        }
        let moved = SoftmaxPolicy::from_logits(10, 3, logits).unwrap();
        let report2 = entropy_reg_policy_gradient(&mdp, &moved, &reward, 0.0).unwrap();
        let a = natural_direction(&pi, &report.state_weights, &report.gradient, 1e-3);
        let b = natural_direction(&moved, &report2.state_weights, &report2.gradient, 1e-3);
        prop_assert!(common::rel_err(&a, &b, 1e-12) <= 1e-6);
    }

    #[test]
    fn scaling_preserves_order(expert in 0.5f64..10.0, random in -10.0f64..0.4, a in -20.0f64..20.0, b in -20.0f64..20.0) {
        let refs = EvalReferences::new(expert, random).unwrap();
        prop_assert_eq!((refs.scale(a) - refs.scale(b)).signum(), (a - b).signum());
        prop_assert!((refs.scale((expert + random) / 2.0) - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn pca_axes_orthonormal_and_plane_round_trip(seed in 0u64..10_000, dim in 3usize..8) {
        let mut r = rng(seed);
        let mut g = || rand::Rng::gen_range(&mut r, -1.0..1.0);
        let basis: Vec<Vec<f64>> = (0..2).map(|_| (0..dim).map(|_| g()).collect()).collect();
        let offset: Vec<f64> = (0..dim).map(|_| g()).collect();
        let data: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                let (u, v) = (3.0 * g(), g());
                (0..dim).map(|k| offset[k] + u * basis[0][k] + v * basis[1][k]).collect()
            })
            .collect();
        let pca = pca_fit(&data).unwrap();
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
        prop_assert!((dot(&pca.axes[0], &pca.axes[0]) - 1.0).abs() <= 1e-10);
        prop_assert!((dot(&pca.axes[1], &pca.axes[1]) - 1.0).abs() <= 1e-10);
        prop_assert!(dot(&pca.axes[0], &pca.axes[1]).abs() <= 1e-10);
        for x in &data {
            let [u, v] = pca.project(x).unwrap();
            let back = pca.inverse(u, v);
            prop_assert!(back.iter().zip(x).all(|(a, b)| (a - b).abs() <= 1e-8));
        }
    }
}

proptest! {
    #![proptest_config(config(8))]

    #[test]
    fn matched_measures_have_zero_regularized_optimum(seed in 0u64..10_000, n in 1usize..8) {
        let mut r = rng(seed);
        let pts: Vec<SupportPoint> = (0..n).map(|i| SupportPoint::new(i, vec![rand::Rng::gen(&mut r)])).collect();
        // One potential over the shared support, as in the imitation loop.
        let tgt = pts.clone();
        let metric = GroundMetric::from_points(pts, tgt, 1.0).unwrap();
        let w = common::random_masses(n, &mut r);
        let pair = DiscreteMeasurePair::new(w.clone(), w).unwrap();
        let mut init = PotentialModel::tabular(n);
        for v in init.params_mut() {
            *v = rand::Rng::gen_range(&mut r, -1.0..1.0);
        }
        let (_, trace) = reg_ot_fit(&pair, &metric, &DualRegularization::l2(0.1).unwrap(), init, 3000, 0.1, Batch::Full, seed).unwrap();
        let last = *trace.last().unwrap();
        prop_assert!(last <= 1e-6 && last >= -1e-3, "final value {last}");
    }

    #[test]
    fn gail_surrogate_is_flat_at_equilibrium(seed in 0u64..10_000) {
        let mdp = small_mdp(6, 3, 0.9, seed);
        let w = common::random_masses(mdp.n_pairs(), &mut rng(seed));
        let set = SampleSet::from_measure(&mdp, &w).unwrap();
        let mut r = rng(seed + 3);
        let params = (0..mdp.n_pairs()).map(|_| rand::Rng::gen_range(&mut r, -2.0..2.0)).collect();
        let mut disc = Discriminator::new(PotentialModel::from_parts(ModelForm::Tabular, vec![mdp.n_pairs()], params, 0).unwrap());
        for _ in 0..20_000 {
            disc = gail_discriminator_step(&disc, &set, &set, 2.0).unwrap().0;
        }
        let table = surrogate_table(&disc, &mdp).unwrap();
        let mean = table.iter().sum::<f64>() / table.len() as f64;
        let std = (table.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / table.len() as f64).sqrt();
        prop_assert!(std <= 0.1, "std {std}");
        prop_assert!((mean - std::f64::consts::LN_2).abs() <= 0.1);
        let _ = mdp_points(&mdp);
    }

    #[test]
    fn wail_is_deterministic_under_seed(seed in 0u64..1000) {
        let mdp = small_mdp(5, 2, 0.9, seed);
        let expert = soft_value_iteration(&mdp, mdp.true_reward().unwrap(), 0.1, 1e-10).unwrap();
        let data = ExpertData::Occupancy(occupancy_from_policy(&mdp, &expert).unwrap());
        let cfg = WailConfig { iterations: 15, seed, early_stop: false, ..WailConfig::default() };
        let a = train_wail(&mdp, &data, &cfg).unwrap();
        let b = train_wail(&mdp, &data, &cfg).unwrap();
        prop_assert_eq!(a.log, b.log);
        prop_assert_eq!(a.policy.logits(), b.policy.logits());
    }
}
