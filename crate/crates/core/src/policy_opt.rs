//! Entropy-regularized policy gradient and the KL-constrained natural
//! gradient step.
//!
//! The gradient is taken of `<r - lambda * log pi_old, rho_theta>` with
//! `pi_old` frozen at the current policy, which at `theta = theta_old`
//! equals the gradient of the expected reward plus `lambda (1 - gamma)`
//! times the gradient of the causal entropy.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::mdp::{
    causal_entropy, occupancy_from_policy, policy_values, sample_trajectories, softmax, state_distribution,
    SoftmaxPolicy, TabularMdp,
};

pub const CG_ITERS: usize = 50;
pub const DEFAULT_DAMPING: f64 = 1e-3;
pub const BACKTRACK_COEFF: f64 = 0.5;
pub const MAX_BACKTRACKS: usize = 10;
/// Relative slack on the KL bound at acceptance.
pub const KL_SLACK: f64 = 1e-3;
const MIN_GRAD_NORM: f64 = 1e-10;

/// `delta_k = delta0 / k^decay`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub delta0: f64,
    pub decay: f64,
}

impl StepSchedule {
    pub fn new(delta0: f64, decay: f64) -> Result<Self> {
        if !(delta0 >= 0.0) || !(decay >= 0.0) {
            return Err(Error::Invalid("schedule needs delta0 >= 0 and decay >= 0".into()));
        }
        Ok(Self { delta0, decay })
    }

    pub fn constant(delta0: f64) -> Result<Self> {
        Self::new(delta0, 0.0)
    }

    pub fn delta(&self, k: usize) -> f64 {
        self.delta0 / (k.max(1) as f64).powf(self.decay)
    }

    /// `sum_{k=1..horizon} sqrt(delta_k)` by direct summation.
    pub fn sqrt_sum(&self, horizon: usize) -> f64 {
        (1..=horizon).map(|k| self.delta(k).sqrt()).sum()
    }

    /// Whether `sum sqrt(delta_k)` converges: `decay > 2` (or no steps at all).
    pub fn is_summable(&self) -> bool {
        self.decay > 2.0 || self.delta0 == 0.0
    }

    /// Closed-form upper bound on the infinite sum for summable schedules:
    /// `sqrt(delta0) * (1 + 1 / (decay/2 - 1))`.
    pub fn sqrt_sum_bound(&self) -> Option<f64> {
        if self.delta0 == 0.0 {
            return Some(0.0);
        }
        if !self.is_summable() {
            return None;
        }
        let q = self.decay / 2.0;
        Some(self.delta0.sqrt() * (1.0 + 1.0 / (q - 1.0)))
    }
}

pub fn schedule_delta(schedule: &StepSchedule, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Invalid("schedule index starts at 1".into()));
    }
    Ok(schedule.delta(k))
}

/// Data the KL step needs to re-evaluate the linear surrogate.
#[derive(Debug, Clone, PartialEq)]
pub enum Surrogate {
    /// Exact advantages of the shaped reward, flat `[s][a]`.
    Exact { advantages: Vec<f64> },
    /// Sampled `(state, action, advantage estimate)` triples.
    Sampled { samples: Vec<(usize, usize, f64)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGradientReport {
    pub gradient: Vec<f64>,
    /// `<r - lambda log pi_old, rho>` at the current policy.
    pub surrogate_value: f64,
    /// Always 0 at the evaluation point; kept for logging symmetry with steps.
    pub kl_to_old: f64,
    pub entropy: f64,
    /// State weights of the Fisher metric and the KL average.
    pub state_weights: Vec<f64>,
    pub surrogate: Surrogate,
}

fn shaped_reward(policy: &SoftmaxPolicy, reward: &[f64], lambda: f64) -> Vec<f64> {
    if lambda == 0.0 {
        return reward.to_vec();
    }
    reward.iter().zip(policy.log_prob_table()).map(|(r, lp)| r - lambda * lp).collect()
}

fn check_inputs(mdp: &TabularMdp, policy: &SoftmaxPolicy, reward: &[f64], lambda: f64) -> Result<()> {
    check_len(mdp.n_states(), policy.n_states())?;
    check_len(mdp.n_actions(), policy.n_actions())?;
    check_len(mdp.n_pairs(), reward.len())?;
    if !(lambda >= 0.0) {
        return Err(Error::Invalid("lambda must be non-negative".into()));
    }
    if reward.iter().any(|r| !r.is_finite()) {
        return Err(Error::Invalid("reward contains non-finite entries".into()));
    }
    Ok(())
}

/// Exact gradient through the occupancy solve:
/// `d/dtheta[s,a] = d(s) pi(a|s) (Q(s,a) - V(s))` for the shaped reward.
pub fn entropy_reg_policy_gradient(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    reward: &[f64],
    lambda: f64,
) -> Result<PolicyGradientReport> {
    check_inputs(mdp, policy, reward, lambda)?;
    let shaped = shaped_reward(policy, reward, lambda);
    let d = state_distribution(mdp, policy)?;
    let (v, q) = policy_values(mdp, policy, &shaped)?;
    let na = mdp.n_actions();
    let probs = policy.prob_table();
    let mut advantages = vec![0.0; mdp.n_pairs()];
    let mut gradient = vec![0.0; mdp.n_pairs()];
    for s in 0..mdp.n_states() {
        for a in 0..na {
            let k = s * na + a;
            advantages[k] = q[k] - v[s];
            gradient[k] = d[s] * probs[k] * advantages[k];
        }
    }
    let surrogate_value = (1.0 - mdp.gamma()) * mdp.start().iter().zip(&v).map(|(m, v)| m * v).sum::<f64>();
    Ok(PolicyGradientReport {
        gradient,
        surrogate_value,
        kl_to_old: 0.0,
        entropy: causal_entropy(mdp, policy)?,
        state_weights: d,
        surrogate: Surrogate::Exact { advantages },
    })
}

/// Score-function estimate from restart-chain rollouts. Each visited pair is
/// weighted by its return-to-go (the undiscounted sum until restart, which
/// estimates the discounted action value) minus a per-state mean baseline.
pub fn sampled_policy_gradient(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    reward: &[f64],
    lambda: f64,
    n_traj: usize,
    max_len: usize,
    seed: u64,
) -> Result<PolicyGradientReport> {
    check_inputs(mdp, policy, reward, lambda)?;
    let shaped = shaped_reward(policy, reward, lambda);
    let trajs = sample_trajectories(mdp, policy, n_traj, max_len, seed)?;
    let n = mdp.n_states();
    let na = mdp.n_actions();
    let mut visits = vec![0.0; n];
    let mut ret_sum = vec![0.0; n];
    let mut raw = Vec::new();
    let mut reward_sum = 0.0;
    let mut nll_sum = 0.0;
    let log_probs = policy.log_prob_table();
    for t in &trajs {
        let mut to_go = 0.0;
        let mut rets = vec![0.0; t.steps.len()];
        for (k, &(s, a)) in t.steps.iter().enumerate().rev() {
            to_go += shaped[s * na + a];
            rets[k] = to_go;
        }
        for (&(s, a), &g) in t.steps.iter().zip(&rets) {
            visits[s] += 1.0;
            ret_sum[s] += g;
            reward_sum += shaped[s * na + a];
            nll_sum -= log_probs[s * na + a];
            raw.push((s, a, g));
        }
    }
    let total = raw.len() as f64;
    let baseline: Vec<f64> = ret_sum.iter().zip(&visits).map(|(r, v)| if *v > 0.0 { r / v } else { 0.0 }).collect();
    let samples: Vec<(usize, usize, f64)> = raw.into_iter().map(|(s, a, g)| (s, a, g - baseline[s])).collect();
    let mut gradient = vec![0.0; mdp.n_pairs()];
    for &(s, a, adv) in &samples {
        let probs = policy.probs(s);
        for (b, p) in probs.iter().enumerate() {
            let score = if a == b { 1.0 - p } else { -p };
            gradient[s * na + b] += score * adv / total;
        }
    }
    Ok(PolicyGradientReport {
        gradient,
        surrogate_value: reward_sum / total,
        kl_to_old: 0.0,
        entropy: nll_sum / total / (1.0 - mdp.gamma()),
        state_weights: visits.iter().map(|v| v / total).collect(),
        surrogate: Surrogate::Sampled { samples },
    })
}

/// `F v` for the state-weighted softmax Fisher plus damping.
fn fisher_vector(policy: &SoftmaxPolicy, weights: &[f64], v: &[f64], damping: f64) -> Vec<f64> {
    let na = policy.n_actions();
    let mut out = vec![0.0; v.len()];
    for (s, &w) in weights.iter().enumerate() {
        let p = policy.probs(s);
        let vs = &v[s * na..(s + 1) * na];
        let mean: f64 = p.iter().zip(vs).map(|(p, v)| p * v).sum();
        for a in 0..na {
            out[s * na + a] = w * p[a] * (vs[a] - mean) + damping * vs[a];
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate gradient for `(F + damping I) x = g`.
pub fn natural_direction(policy: &SoftmaxPolicy, weights: &[f64], g: &[f64], damping: f64) -> Vec<f64> {
    let mut x = vec![0.0; g.len()];
    let mut r = g.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let tol = 1e-20 * dot(g, g).max(1e-300);
    for _ in 0..CG_ITERS {
        if rr <= tol {
            break;
        }
        let fp = fisher_vector(policy, weights, &p, damping);
        let pfp = dot(&p, &fp);
        if !(pfp > 0.0) {
            break;
        }
        let alpha = rr / pfp;
        x.iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
        r.iter_mut().zip(&fp).for_each(|(r, f)| *r -= alpha * f);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        p.iter_mut().zip(&r).for_each(|(p, r)| *p = r + beta * *p);
        rr = rr_new;
    }
    x
}

/// State-weighted `KL(new || old)`.
pub fn weighted_kl(new: &SoftmaxPolicy, old: &SoftmaxPolicy, weights: &[f64]) -> f64 {
    weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(s, &w)| {
            let ln = new.log_probs(s);
            let lo = old.log_probs(s);
            let kl: f64 = ln.iter().zip(&lo).map(|(n, o)| n.exp() * (n - o)).sum();
            w * kl.max(0.0)
        })
        .sum()
}

/// Linear surrogate of `candidate` relative to the policy the report was
/// computed at. Zero at that policy.
pub fn surrogate_gain(report: &PolicyGradientReport, old: &SoftmaxPolicy, candidate: &SoftmaxPolicy) -> f64 {
    let na = old.n_actions();
    match &report.surrogate {
        Surrogate::Exact { advantages } => report
            .state_weights
            .iter()
            .enumerate()
            .map(|(s, &w)| {
                let pn = candidate.probs(s);
                let po = old.probs(s);
                let adv = &advantages[s * na..(s + 1) * na];
                w * pn.iter().zip(&po).zip(adv).map(|((n, o), a)| (n - o) * a).sum::<f64>()
            })
            .sum(),
        Surrogate::Sampled { samples } => {
            if samples.is_empty() {
                return 0.0;
            }
            let lnew = candidate.log_prob_table();
            let lold = old.log_prob_table();
            samples.iter().map(|&(s, a, adv)| ((lnew[s * na + a] - lold[s * na + a]).exp() - 1.0) * adv).sum::<f64>()
                / samples.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub policy: SoftmaxPolicy,
    pub accepted: bool,
    /// Weighted `KL(new || old)` of the returned policy.
    pub kl: f64,
    pub surrogate_gain: f64,
    /// Fraction of the full trust-region step that was taken.
    pub step_fraction: f64,
    /// True when the Fisher solve was unusable and the plain gradient was scaled instead.
    pub fallback: bool,
}

pub fn kl_constrained_step(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    report: &PolicyGradientReport,
    delta: f64,
) -> Result<StepOutcome> {
    kl_constrained_step_damped(mdp, policy, report, delta, DEFAULT_DAMPING)
}

/// Natural-gradient step scaled to the KL radius, then backtracked until both
/// the KL bound and surrogate non-decrease hold.
pub fn kl_constrained_step_damped(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    report: &PolicyGradientReport,
    delta: f64,
    damping: f64,
) -> Result<StepOutcome> {
    check_len(mdp.n_pairs(), policy.logits().len())?;
    check_len(mdp.n_pairs(), report.gradient.len())?;
    check_len(mdp.n_states(), report.state_weights.len())?;
    if !(delta >= 0.0) {
        return Err(Error::Invalid("delta must be non-negative".into()));
    }
    let unchanged = |fallback| StepOutcome {
        policy: policy.clone(),
        accepted: false,
        kl: 0.0,
        surrogate_gain: 0.0,
        step_fraction: 0.0,
        fallback,
    };
    let g = &report.gradient;
    if delta == 0.0 || dot(g, g).sqrt() < MIN_GRAD_NORM {
        return Ok(unchanged(false));
    }
    let w = &report.state_weights;
    let mut dir = natural_direction(policy, w, g, damping);
    let mut shs = dot(&dir, &fisher_vector(policy, w, &dir, 0.0));
    let mut fallback = false;
    if !(shs > 1e-300) || !shs.is_finite() || dir.iter().any(|v| !v.is_finite()) {
        fallback = true;
        dir = g.clone();
        shs = dot(&dir, &fisher_vector(policy, w, &dir, 0.0));
        if !(shs > 1e-300) {
            return Ok(unchanged(true));
        }
    }
    let full = (2.0 * delta / shs).sqrt();
    let mut frac = 1.0;
    for _ in 0..=MAX_BACKTRACKS {
        let step = full * frac;
        let logits: Vec<f64> = policy.logits().iter().zip(&dir).map(|(l, d)| l + step * d).collect();
        let cand = SoftmaxPolicy::from_logits(policy.n_states(), policy.n_actions(), logits)?;
        let kl = weighted_kl(&cand, policy, w);
        let gain = surrogate_gain(report, policy, &cand);
        if kl <= delta * (1.0 + KL_SLACK) && gain >= 0.0 {
            return Ok(StepOutcome { policy: cand, accepted: true, kl, surrogate_gain: gain, step_fraction: frac, fallback });
        }
        frac *= BACKTRACK_COEFF;
    }
    Ok(unchanged(fallback))
}

/// `<r, rho_pi> / (1 - gamma) + lambda H(pi)`: the objective soft value
/// iteration maximizes.
pub fn soft_objective(mdp: &TabularMdp, policy: &SoftmaxPolicy, reward: &[f64], lambda: f64) -> Result<f64> {
    let rho = occupancy_from_policy(mdp, policy)?;
    let er: f64 = rho.as_slice().iter().zip(reward).map(|(p, r)| p * r).sum();
    Ok(er / (1.0 - mdp.gamma()) + lambda * causal_entropy(mdp, policy)?)
}

/// Per-state probabilities after a logit shift; used to check gauge invariance.
pub fn shifted_probs(policy: &SoftmaxPolicy, s: usize, shift: f64) -> Vec<f64> {
    let row: Vec<f64> = policy.state_logits(s).iter().map(|l| l + shift).collect();
    softmax(&row)
}
