//! Discounted tabular MDPs and their exact solvers.
//!
//! Every state-action table in this crate is a flat `Vec<f64>` laid out
//! row-major as `s * n_actions + a`.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

const ROW_TOL: f64 = 1e-10;

/// Logit gap used to represent a deterministic choice with finite numbers.
pub const DETERMINISTIC_GAP: f64 = 30.0;

/// Iteration cap for [`soft_value_iteration`].
pub const SOFT_VI_MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    start: Vec<f64>,
    gamma: f64,
    true_reward: Option<Vec<f64>>,
    state_embed: Vec<Vec<f64>>,
    action_embed: Vec<Vec<f64>>,
}

/// JSON wire form, transition as nested `[s][a][s']` arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpFile {
    pub n_states: usize,
    pub n_actions: usize,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub start: Vec<f64>,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_reward: Option<Vec<Vec<f64>>>,
    pub state_embed: Vec<Vec<f64>>,
    pub action_embed: Vec<Vec<f64>>,
}

impl TabularMdp {
    /// Builds and validates an MDP. `transition` is flat `[s][a][s']`,
    /// `true_reward` flat `[s][a]`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        start: Vec<f64>,
        gamma: f64,
        true_reward: Option<Vec<f64>>,
        state_embed: Vec<Vec<f64>>,
        action_embed: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Invalid("MDP needs at least one state and one action".into()));
        }
        check_len(n_states * n_actions * n_states, transition.len())?;
        check_len(n_states, start.len())?;
        check_len(n_states, state_embed.len())?;
        check_len(n_actions, action_embed.len())?;
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Invalid(format!("gamma must lie in (0,1), got {gamma}")));
        }
        for (row_idx, row) in transition.chunks(n_states).enumerate() {
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::Invalid(format!("negative transition entry in row {row_idx}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOL {
                return Err(Error::Invalid(format!(
                    "transition row (s={}, a={}) sums to {sum}",
                    row_idx / n_actions,
                    row_idx % n_actions
                )));
            }
        }
        if start.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::Invalid("start distribution must be strictly positive".into()));
        }
        let start_sum: f64 = start.iter().sum();
        if (start_sum - 1.0).abs() > ROW_TOL {
            return Err(Error::Invalid(format!("start distribution sums to {start_sum}")));
        }
        if let Some(r) = &true_reward {
            check_len(n_states * n_actions, r.len())?;
        }
        let sdim = state_embed[0].len();
        if state_embed.iter().any(|e| e.len() != sdim) {
            return Err(Error::Invalid("state embeddings have inconsistent widths".into()));
        }
        let adim = action_embed[0].len();
        if action_embed.iter().any(|e| e.len() != adim) {
            return Err(Error::Invalid("action embeddings have inconsistent widths".into()));
        }
        Ok(Self { n_states, n_actions, transition, start, gamma, true_reward, state_embed, action_embed })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn start(&self) -> &[f64] {
        &self.start
    }

    pub fn true_reward(&self) -> Option<&[f64]> {
        self.true_reward.as_deref()
    }

    pub fn with_true_reward(mut self, reward: Vec<f64>) -> Result<Self> {
        check_len(self.n_pairs(), reward.len())?;
        self.true_reward = Some(reward);
        Ok(self)
    }

    /// Distribution over next states after taking `a` in `s`.
    pub fn next(&self, s: usize, a: usize) -> &[f64] {
        let off = (s * self.n_actions + a) * self.n_states;
        &self.transition[off..off + self.n_states]
    }

    pub fn pair_index(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    pub fn pair_of(&self, idx: usize) -> (usize, usize) {
        (idx / self.n_actions, idx % self.n_actions)
    }

    pub fn state_embed(&self, s: usize) -> &[f64] {
        &self.state_embed[s]
    }

    pub fn action_embed(&self, a: usize) -> &[f64] {
        &self.action_embed[a]
    }

    pub fn embed_dim(&self) -> usize {
        self.state_embed[0].len() + self.action_embed[0].len()
    }

    /// Concatenated `[state_embed; action_embed]` for a flat pair index.
    pub fn pair_embed(&self, idx: usize) -> Vec<f64> {
        let (s, a) = self.pair_of(idx);
        let mut v = Vec::with_capacity(self.embed_dim());
        v.extend_from_slice(&self.state_embed[s]);
        v.extend_from_slice(&self.action_embed[a]);
        v
    }

    pub fn all_pair_embeds(&self) -> Vec<Vec<f64>> {
        (0..self.n_pairs()).map(|i| self.pair_embed(i)).collect()
    }

    /// State-to-state matrix `P_pi[s][s'] = sum_a pi(a|s) p(s'|s,a)`.
    fn state_transition(&self, policy: &SoftmaxPolicy) -> DMatrix<f64> {
        let n = self.n_states;
        let mut m = DMatrix::zeros(n, n);
        for s in 0..n {
            let probs = policy.probs(s);
            for (a, &pa) in probs.iter().enumerate() {
                for (s2, &p) in self.next(s, a).iter().enumerate() {
                    if p != 0.0 {
                        m[(s, s2)] += pa * p;
                    }
                }
            }
        }
        m
    }

    pub fn to_file(&self) -> MdpFile {
        let nested = (0..self.n_states)
            .map(|s| (0..self.n_actions).map(|a| self.next(s, a).to_vec()).collect())
            .collect();
        MdpFile {
            n_states: self.n_states,
            n_actions: self.n_actions,
            transition: nested,
            start: self.start.clone(),
            gamma: self.gamma,
            true_reward: self
                .true_reward
                .as_ref()
                .map(|r| r.chunks(self.n_actions).map(|c| c.to_vec()).collect()),
            state_embed: self.state_embed.clone(),
            action_embed: self.action_embed.clone(),
        }
    }

    pub fn from_file(f: MdpFile) -> Result<Self> {
        let mut flat = Vec::with_capacity(f.n_states * f.n_actions * f.n_states);
        check_len(f.n_states, f.transition.len())?;
        for per_state in &f.transition {
            check_len(f.n_actions, per_state.len())?;
            for row in per_state {
                check_len(f.n_states, row.len())?;
                flat.extend_from_slice(row);
            }
        }
        let reward = match f.true_reward {
            Some(rows) => {
                check_len(f.n_states, rows.len())?;
                let mut r = Vec::with_capacity(f.n_states * f.n_actions);
                for row in rows {
                    check_len(f.n_actions, row.len())?;
                    r.extend(row);
                }
                Some(r)
            }
            None => None,
        };
        Self::new(f.n_states, f.n_actions, flat, f.start, f.gamma, reward, f.state_embed, f.action_embed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(s)?)
    }
}

/// Stochastic policy `pi(a|s) = softmax(logits[s])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxPolicy {
    n_states: usize,
    n_actions: usize,
    logits: Vec<f64>,
}

impl SoftmaxPolicy {
    pub fn from_logits(n_states: usize, n_actions: usize, logits: Vec<f64>) -> Result<Self> {
        check_len(n_states * n_actions, logits.len())?;
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::Invalid("policy logits must be finite".into()));
        }
        Ok(Self { n_states, n_actions, logits })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions, logits: vec![0.0; n_states * n_actions] }
    }

    /// One chosen action per state, encoded with a logit gap of [`DETERMINISTIC_GAP`].
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Self {
        let n_states = actions.len();
        let mut logits = vec![0.0; n_states * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            logits[s * n_actions + a] = DETERMINISTIC_GAP;
        }
        Self { n_states, n_actions, logits }
    }

    /// Policy from per-state probability rows (flat). Rows are renormalized;
    /// zero entries are floored so logits stay finite.
    pub fn from_probs(n_states: usize, n_actions: usize, probs: &[f64]) -> Result<Self> {
        check_len(n_states * n_actions, probs.len())?;
        let floor = (-DETERMINISTIC_GAP).exp();
        let mut logits = Vec::with_capacity(probs.len());
        for row in probs.chunks(n_actions) {
            let total: f64 = row.iter().sum();
            if !(total > 0.0) {
                return Err(Error::Invalid("probability row has no mass".into()));
            }
            logits.extend(row.iter().map(|&p| (p / total).max(floor).ln()));
        }
        Ok(Self { n_states, n_actions, logits })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    pub fn state_logits(&self, s: usize) -> &[f64] {
        &self.logits[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn probs(&self, s: usize) -> Vec<f64> {
        softmax(self.state_logits(s))
    }

    pub fn log_probs(&self, s: usize) -> Vec<f64> {
        let row = self.state_logits(s);
        let lse = log_sum_exp(row);
        row.iter().map(|&l| l - lse).collect()
    }

    /// Flat `[s][a]` table of action probabilities.
    pub fn prob_table(&self) -> Vec<f64> {
        (0..self.n_states).flat_map(|s| self.probs(s)).collect()
    }

    pub fn log_prob_table(&self) -> Vec<f64> {
        (0..self.n_states).flat_map(|s| self.log_probs(s)).collect()
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        sample_index(&self.probs(s), rng)
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|&x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // rounding: fall back to the last index with positive weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

/// Normalized discounted state-action occupancy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyMeasure {
    n_states: usize,
    n_actions: usize,
    rho: Vec<f64>,
}

impl OccupancyMeasure {
    pub fn new(n_states: usize, n_actions: usize, rho: Vec<f64>) -> Result<Self> {
        check_len(n_states * n_actions, rho.len())?;
        if rho.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::Invalid("occupancy entries must be non-negative".into()));
        }
        Ok(Self { n_states, n_actions, rho })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rho
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.rho[s * self.n_actions + a]
    }

    pub fn total_mass(&self) -> f64 {
        self.rho.iter().sum()
    }

    pub fn state_marginal(&self) -> Vec<f64> {
        self.rho.chunks(self.n_actions).map(|r| r.iter().sum()).collect()
    }

    /// Infinity-norm residual of the Bellman flow equation.
    pub fn flow_residual(&self, mdp: &TabularMdp) -> f64 {
        let n = mdp.n_states();
        let g = mdp.gamma();
        let mut rhs: Vec<f64> = mdp.start().iter().map(|&m| (1.0 - g) * m).collect();
        for s in 0..n {
            for a in 0..mdp.n_actions() {
                let w = self.get(s, a);
                if w == 0.0 {
                    continue;
                }
                for (s2, &p) in mdp.next(s, a).iter().enumerate() {
                    rhs[s2] += g * p * w;
                }
            }
        }
        self.state_marginal().iter().zip(&rhs).map(|(l, r)| (l - r).abs()).fold(0.0, f64::max)
    }
}

fn check_shapes(mdp: &TabularMdp, policy: &SoftmaxPolicy) -> Result<()> {
    check_len(mdp.n_states(), policy.n_states())?;
    check_len(mdp.n_actions(), policy.n_actions())
}

/// Normalized discounted state distribution `d = (1-g) (I - g P_pi^T)^{-1} mu0`.
pub fn state_distribution(mdp: &TabularMdp, policy: &SoftmaxPolicy) -> Result<Vec<f64>> {
    check_shapes(mdp, policy)?;
    let n = mdp.n_states();
    let g = mdp.gamma();
    let p = mdp.state_transition(policy);
    let a = DMatrix::identity(n, n) - p.transpose() * g;
    let b = DVector::from_iterator(n, mdp.start().iter().map(|&m| (1.0 - g) * m));
    let d = a.lu().solve(&b).ok_or_else(|| Error::Singular("Bellman flow system".into()))?;
    Ok(d.iter().map(|&v| v.max(0.0)).collect())
}

pub fn occupancy_from_policy(mdp: &TabularMdp, policy: &SoftmaxPolicy) -> Result<OccupancyMeasure> {
    let d = state_distribution(mdp, policy)?;
    let mut rho = Vec::with_capacity(mdp.n_pairs());
    for (s, &ds) in d.iter().enumerate() {
        rho.extend(policy.probs(s).into_iter().map(|p| ds * p));
    }
    OccupancyMeasure::new(mdp.n_states(), mdp.n_actions(), rho)
}

/// Inverse of the occupancy map: normalizes each row. Rows without mass get
/// the uniform distribution.
pub fn policy_from_occupancy(rho: &OccupancyMeasure) -> Result<SoftmaxPolicy> {
    if !(rho.total_mass() > 0.0) {
        return Err(Error::Degenerate("occupancy measure has no mass".into()));
    }
    let na = rho.n_actions();
    let mut logits = Vec::with_capacity(rho.as_slice().len());
    for row in rho.as_slice().chunks(na) {
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            let floor = (-DETERMINISTIC_GAP).exp();
            logits.extend(row.iter().map(|&v| (v / total).max(floor).ln()));
        } else {
            logits.extend(std::iter::repeat(0.0).take(na));
        }
    }
    SoftmaxPolicy::from_logits(rho.n_states(), na, logits)
}

/// Discounted causal entropy `E_rho[-log pi(a|s)] / (1 - gamma)`.
pub fn causal_entropy(mdp: &TabularMdp, policy: &SoftmaxPolicy) -> Result<f64> {
    let rho = occupancy_from_policy(mdp, policy)?;
    let h: f64 = rho
        .as_slice()
        .iter()
        .zip(policy.log_prob_table())
        .map(|(&w, lp)| if w > 0.0 { -w * lp } else { 0.0 })
        .sum();
    Ok(h.max(0.0) / (1.0 - mdp.gamma()))
}

/// `<r, rho>`; the cumulative discounted value is this divided by `1 - gamma`.
pub fn expected_reward(rho: &OccupancyMeasure, reward: &[f64]) -> Result<f64> {
    check_len(rho.as_slice().len(), reward.len())?;
    Ok(rho.as_slice().iter().zip(reward).map(|(a, b)| a * b).sum())
}

/// Cumulative state values and action values of `reward` under `policy`.
pub fn policy_values(mdp: &TabularMdp, policy: &SoftmaxPolicy, reward: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_shapes(mdp, policy)?;
    check_len(mdp.n_pairs(), reward.len())?;
    let n = mdp.n_states();
    let na = mdp.n_actions();
    let g = mdp.gamma();
    let p = mdp.state_transition(policy);
    let r_pi = DVector::from_iterator(
        n,
        (0..n).map(|s| policy.probs(s).iter().zip(&reward[s * na..(s + 1) * na]).map(|(p, r)| p * r).sum()),
    );
    let a = DMatrix::identity(n, n) - p * g;
    let v = a.lu().solve(&r_pi).ok_or_else(|| Error::Singular("policy evaluation".into()))?;
    let mut q = Vec::with_capacity(n * na);
    for s in 0..n {
        for act in 0..na {
            let ev: f64 = mdp.next(s, act).iter().zip(v.iter()).map(|(p, v)| p * v).sum();
            q.push(reward[s * na + act] + g * ev);
        }
    }
    Ok((v.iter().cloned().collect(), q))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub steps: Vec<(usize, usize)>,
    pub terminated_by_restart: bool,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryLine {
    steps: Vec<[usize; 2]>,
    truncated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

pub fn write_trajectories<W: Write>(mut w: W, trajs: &[Trajectory]) -> Result<()> {
    for t in trajs {
        let line = TrajectoryLine {
            steps: t.steps.iter().map(|&(s, a)| [s, a]).collect(),
            truncated: !t.terminated_by_restart,
        };
        serde_json::to_writer(&mut w, &line)?;
        writeln!(w)?;
    }
    Ok(())
}

/// Reads JSON-lines trajectories, checking indices against `mdp` when given.
pub fn read_trajectories<R: BufRead>(r: R, mdp: Option<&TabularMdp>) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TrajectoryLine = serde_json::from_str(&line)?;
        if parsed.steps.is_empty() {
            return Err(Error::Invalid("empty trajectory".into()));
        }
        if let Some(m) = mdp {
            if parsed.steps.iter().any(|&[s, a]| s >= m.n_states() || a >= m.n_actions()) {
                return Err(Error::Invalid("trajectory index out of MDP bounds".into()));
            }
        }
        out.push(Trajectory {
            steps: parsed.steps.into_iter().map(|[s, a]| (s, a)).collect(),
            terminated_by_restart: !parsed.truncated,
        });
    }
    Ok(out)
}

/// `ceil(log(1e-6) / log(gamma))`: truncation length whose bias is below 1e-6.
pub fn default_max_len(gamma: f64) -> usize {
    ((1e-6f64).ln() / gamma.ln()).ceil().max(1.0) as usize
}

/// Samples the restart chain: after every step the episode ends with
/// probability `1 - gamma`; episodes are also cut at `max_len`.
pub fn sample_trajectories(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    n: usize,
    max_len: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    check_shapes(mdp, policy)?;
    if n == 0 || max_len == 0 {
        return Err(Error::Invalid("need n >= 1 and max_len >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = WeightedIndex::new(mdp.start()).map_err(|e| Error::Invalid(e.to_string()))?;
    let probs: Vec<Vec<f64>> = (0..mdp.n_states()).map(|s| policy.probs(s)).collect();
    let g = mdp.gamma();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut s = start.sample(&mut rng);
        let mut steps = Vec::new();
        let restarted = loop {
            let a = sample_index(&probs[s], &mut rng);
            steps.push((s, a));
            if rng.gen::<f64>() >= g {
                break true;
            }
            if steps.len() >= max_len {
                break false;
            }
            s = sample_index(mdp.next(s, a), &mut rng);
        };
        out.push(Trajectory { steps, terminated_by_restart: restarted });
    }
    Ok(out)
}

/// Empirical state-action frequencies of a set of trajectories.
pub fn empirical_occupancy(mdp: &TabularMdp, trajs: &[Trajectory]) -> Result<OccupancyMeasure> {
    let mut counts = vec![0.0; mdp.n_pairs()];
    let mut total = 0.0;
    for t in trajs {
        for &(s, a) in &t.steps {
            if s >= mdp.n_states() || a >= mdp.n_actions() {
                return Err(Error::Invalid("trajectory index out of MDP bounds".into()));
            }
            counts[mdp.pair_index(s, a)] += 1.0;
            total += 1.0;
        }
    }
    if total == 0.0 {
        return Err(Error::Invalid("no demonstration steps".into()));
    }
    counts.iter_mut().for_each(|c| *c /= total);
    OccupancyMeasure::new(mdp.n_states(), mdp.n_actions(), counts)
}

/// Fixed point of the soft Bellman operator with temperature `lambda`:
/// `Q = r + g P V`, `V(s) = lambda * logsumexp(Q(s,.) / lambda)`. The returned
/// policy is `softmax(Q / lambda)`, the maximizer of the cumulative reward
/// plus `lambda` times the causal entropy.
pub fn soft_value_iteration(mdp: &TabularMdp, reward: &[f64], lambda: f64, tol: f64) -> Result<SoftmaxPolicy> {
    soft_q_values(mdp, reward, lambda, tol).and_then(|q| {
        let logits = q.iter().map(|&v| v / lambda).collect();
        SoftmaxPolicy::from_logits(mdp.n_states(), mdp.n_actions(), logits)
    })
}

pub fn soft_q_values(mdp: &TabularMdp, reward: &[f64], lambda: f64, tol: f64) -> Result<Vec<f64>> {
    check_len(mdp.n_pairs(), reward.len())?;
    if !(lambda > 0.0) || !(tol > 0.0) {
        return Err(Error::Invalid("soft value iteration needs lambda > 0 and tol > 0".into()));
    }
    let n = mdp.n_states();
    let na = mdp.n_actions();
    let g = mdp.gamma();
    let mut v = vec![0.0; n];
    let mut q = vec![0.0; n * na];
    let mut scaled = vec![0.0; na];
    let mut residual = f64::INFINITY;
    for _ in 0..SOFT_VI_MAX_ITERS {
        for s in 0..n {
            for a in 0..na {
                let ev: f64 = mdp.next(s, a).iter().zip(&v).map(|(p, v)| p * v).sum();
                q[s * na + a] = reward[s * na + a] + g * ev;
            }
        }
        residual = 0.0;
        for s in 0..n {
            for a in 0..na {
                scaled[a] = q[s * na + a] / lambda;
            }
            let nv = lambda * log_sum_exp(&scaled);
            residual = f64::max(residual, (nv - v[s]).abs());
            v[s] = nv;
        }
        if !residual.is_finite() {
            break;
        }
        if residual <= tol {
            return Ok(q);
        }
    }
    Err(Error::NotConverged { iterations: SOFT_VI_MAX_ITERS, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_state_chain(gamma: f64) -> TabularMdp {
        // 0 -> 1 -> 1; start is almost surely state 0
        let start = vec![1.0 - 1e-12, 1e-12];
        TabularMdp::new(2, 1, vec![0.0, 1.0, 0.0, 1.0], start, gamma, None, vec![vec![0.0], vec![1.0]], vec![vec![1.0]])
            .unwrap()
    }

    fn singleton(n_actions: usize, gamma: f64) -> TabularMdp {
        TabularMdp::new(
            1,
            n_actions,
            vec![1.0; n_actions],
            vec![1.0],
            gamma,
            None,
            vec![vec![0.0]],
            (0..n_actions).map(|a| vec![a as f64]).collect(),
        )
        .unwrap()
    }

    pub(crate) fn random_mdp(n: usize, na: usize, gamma: f64, seed: u64) -> TabularMdp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Vec::new();
        for _ in 0..n * na {
            let row: Vec<f64> = (0..n).map(|_| rng.gen::<f64>().powi(3)).collect();
            let z: f64 = row.iter().sum();
            p.extend(row.iter().map(|v| v / z));
        }
        let mu: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.05).collect();
        let z: f64 = mu.iter().sum();
        TabularMdp::new(
            n,
            na,
            p,
            mu.iter().map(|v| v / z).collect(),
            gamma,
            None,
            (0..n).map(|s| vec![s as f64]).collect(),
            (0..na).map(|a| vec![a as f64]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn singleton_occupancy_is_one() {
        let m = singleton(1, 0.9);
        let rho = occupancy_from_policy(&m, &SoftmaxPolicy::uniform(1, 1)).unwrap();
        assert_abs_diff_eq!(rho.get(0, 0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_state_chain_occupancy() {
        // d0 = (1-g), d1 = g for a start almost surely in 0
        let m = two_state_chain(0.5);
        let rho = occupancy_from_policy(&m, &SoftmaxPolicy::uniform(2, 1)).unwrap();
        assert_abs_diff_eq!(rho.get(0, 0), 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(rho.get(1, 0), 0.5, epsilon = 1e-10);
        assert!(rho.flow_residual(&m) < 1e-12);
        let pi = policy_from_occupancy(&rho).unwrap();
        assert_abs_diff_eq!(pi.probs(0)[0], 1.0);
        assert_abs_diff_eq!(pi.probs(1)[0], 1.0);
    }

    #[test]
    fn row_normalization_and_zero_mass_rows() {
        let rho = OccupancyMeasure::new(2, 2, vec![0.3, 0.1, 0.0, 0.0]).unwrap();
        let pi = policy_from_occupancy(&rho).unwrap();
        assert_abs_diff_eq!(pi.probs(0)[0], 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(pi.probs(0)[1], 0.25, epsilon = 1e-12);
        assert_eq!(pi.probs(1), vec![0.5, 0.5]);
        let empty = OccupancyMeasure::new(1, 2, vec![0.0, 0.0]).unwrap();
        assert!(policy_from_occupancy(&empty).is_err());
    }

    #[test]
    fn entropy_extremes() {
        let m = random_mdp(6, 4, 0.9, 3);
        let h = causal_entropy(&m, &SoftmaxPolicy::uniform(6, 4)).unwrap();
        assert_abs_diff_eq!(h, 4f64.ln() / 0.1, epsilon = 1e-9);
        let det = SoftmaxPolicy::deterministic(4, &[0, 1, 2, 3, 0, 1]);
        assert!(causal_entropy(&m, &det).unwrap() <= 1e-6);
    }

    #[test]
    fn expected_reward_constant() {
        let m = random_mdp(5, 3, 0.8, 1);
        let rho = occupancy_from_policy(&m, &SoftmaxPolicy::uniform(5, 3)).unwrap();
        assert_eq!(expected_reward(&rho, &vec![0.0; 15]).unwrap(), 0.0);
        assert_abs_diff_eq!(expected_reward(&rho, &vec![2.5; 15]).unwrap(), 2.5, epsilon = 1e-10);
        assert!(expected_reward(&rho, &[1.0]).is_err());
    }

    #[test]
    fn near_zero_gamma_gives_single_steps() {
        let m = singleton(2, 1e-9);
        let t = sample_trajectories(&m, &SoftmaxPolicy::uniform(1, 2), 200, 10, 7).unwrap();
        assert!(t.iter().all(|t| t.len() == 1 && t.terminated_by_restart));
    }

    #[test]
    fn sampling_is_seeded() {
        let m = random_mdp(5, 3, 0.9, 2);
        let pi = SoftmaxPolicy::uniform(5, 3);
        let a = sample_trajectories(&m, &pi, 20, 50, 11).unwrap();
        let b = sample_trajectories(&m, &pi, 20, 50, 11).unwrap();
        assert_eq!(a, b);
        assert!(sample_trajectories(&m, &pi, 0, 50, 11).is_err());
    }

    #[test]
    fn chain_empirical_frequencies() {
        let m = two_state_chain(0.5);
        let t = sample_trajectories(&m, &SoftmaxPolicy::uniform(2, 1), 100_000, 64, 5).unwrap();
        let emp = empirical_occupancy(&m, &t).unwrap();
        assert!((emp.get(0, 0) - 0.5).abs() < 0.01);
        assert!((emp.get(1, 0) - 0.5).abs() < 0.01);
    }

    #[test]
    fn soft_vi_closed_forms() {
        let m = singleton(2, 0.5);
        let pi = soft_value_iteration(&m, &[0.0, 0.0], 1.0, 1e-12).unwrap();
        assert_abs_diff_eq!(pi.probs(0)[0], 0.5, epsilon = 1e-12);

        // gamma -> 0: softmax of the immediate reward
        let m = singleton(2, 1e-9);
        let pi = soft_value_iteration(&m, &[1.0, 0.0], 1.0, 1e-12).unwrap();
        let expect = 1.0 / (1.0 + (-1.0f64).exp());
        assert_abs_diff_eq!(pi.probs(0)[0], expect, epsilon = 1e-8);
        assert_abs_diff_eq!(expect, 0.7311, epsilon = 1e-4);
    }

    #[test]
    fn soft_vi_rejects_bad_parameters() {
        let m = singleton(2, 0.5);
        assert!(soft_value_iteration(&m, &[0.0, 0.0], 0.0, 1e-9).is_err());
        assert!(soft_value_iteration(&m, &[0.0], 1.0, 1e-9).is_err());
    }

    #[test]
    fn soft_vi_shift_invariance() {
        let m = random_mdp(7, 3, 0.9, 4);
        let r: Vec<f64> = (0..21).map(|i| ((i * 37) % 11) as f64 / 11.0).collect();
        let shifted: Vec<f64> = r.iter().map(|v| v + 3.7).collect();
        let a = soft_value_iteration(&m, &r, 0.3, 1e-12).unwrap().prob_table();
        let b = soft_value_iteration(&m, &shifted, 0.3, 1e-12).unwrap().prob_table();
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-8);
        }
    }

    #[test]
    fn mdp_validation() {
        let bad_row = TabularMdp::new(1, 1, vec![0.9], vec![1.0], 0.5, None, vec![vec![0.0]], vec![vec![0.0]]);
        assert!(bad_row.is_err());
        let zero_start =
            TabularMdp::new(2, 1, vec![1.0, 0.0, 0.0, 1.0], vec![1.0, 0.0], 0.5, None, vec![vec![0.0]; 2], vec![vec![0.0]]);
        assert!(zero_start.is_err());
        let bad_gamma = TabularMdp::new(1, 1, vec![1.0], vec![1.0], 1.0, None, vec![vec![0.0]], vec![vec![0.0]]);
        assert!(bad_gamma.is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = random_mdp(4, 2, 0.9, 9).with_true_reward(vec![0.5; 8]).unwrap();
        let back = TabularMdp::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
        let t = sample_trajectories(&m, &SoftmaxPolicy::uniform(4, 2), 5, 20, 3).unwrap();
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &t).unwrap();
        let parsed = read_trajectories(buf.as_slice(), Some(&m)).unwrap();
        assert_eq!(t, parsed);
    }
}
