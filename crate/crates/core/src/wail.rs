//! The alternating reward/policy loop.
//!
//! Each iteration takes `ot_inner_steps` ascent steps on the regularized OT
//! dual between the current policy occupancy and the expert measure, then
//! one KL-constrained natural-gradient step of the policy against the frozen
//! updated potential.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::eval::{evaluate, EvalReferences};
use crate::mdp::{
    empirical_occupancy, occupancy_from_policy, sample_trajectories, OccupancyMeasure, SoftmaxPolicy, TabularMdp,
    Trajectory,
};
use crate::ot::{build_ground_metric, reg_ot_step, Batch, DiscreteMeasurePair, DualRegularization, GroundMetric};
use crate::policy_opt::{
    entropy_reg_policy_gradient, kl_constrained_step_damped, sampled_policy_gradient, StepSchedule, DEFAULT_DAMPING,
};
use crate::reward::{ModelForm, PotentialModel};
use crate::runlog::{LogRow, RunLog};

/// Expert side of the transport problem.
#[derive(Debug, Clone)]
pub enum ExpertData {
    Trajectories(Vec<Trajectory>),
    /// Exact expert occupancy, for oracle tests.
    Occupancy(OccupancyMeasure),
}

impl ExpertData {
    pub fn measure(&self, mdp: &TabularMdp) -> Result<OccupancyMeasure> {
        match self {
            ExpertData::Trajectories(t) => {
                if t.is_empty() {
                    return Err(Error::Invalid("no expert trajectories".into()));
                }
                empirical_occupancy(mdp, t)
            }
            ExpertData::Occupancy(rho) => {
                if !(rho.total_mass() > 0.0) {
                    return Err(Error::Invalid("expert occupancy has no mass".into()));
                }
                Ok(rho.clone())
            }
        }
    }

    pub fn n_pairs(&self) -> usize {
        match self {
            ExpertData::Trajectories(t) => t.iter().map(|t| t.len()).sum(),
            ExpertData::Occupancy(rho) => rho.as_slice().iter().filter(|&&v| v > 0.0).count(),
        }
    }
}

/// How the policy side is observed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyMode {
    /// Occupancy and gradient by linear solves.
    Exact,
    /// Restart-chain rollouts for both the occupancy and the gradient.
    Sampled { n_traj: usize, max_len: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub form: ModelForm,
    #[serde(default)]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn build(&self, mdp: &TabularMdp) -> PotentialModel {
        match self.form {
            ModelForm::Tabular => PotentialModel::tabular(mdp.n_pairs()),
            ModelForm::Linear => PotentialModel::linear(mdp.embed_dim(), self.seed),
            ModelForm::Mlp => PotentialModel::mlp(mdp.embed_dim(), &self.hidden, self.seed),
        }
    }
}

/// Optional in-loop evaluation with fixed references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalHook {
    pub every: usize,
    pub n_eval: usize,
    pub seed: u64,
    pub references: EvalReferences,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WailConfig {
    pub iterations: usize,
    pub reg: DualRegularization,
    pub metric_scale: f64,
    pub reward_model: ModelSpec,
    /// Reward ascent rate (alpha).
    pub reward_lr: f64,
    pub ot_inner_steps: usize,
    pub batch: Batch,
    pub schedule: StepSchedule,
    /// Causal-entropy weight (lambda).
    pub lambda: f64,
    pub policy_mode: PolicyMode,
    pub damping: f64,
    pub early_stop: bool,
    pub early_stop_window: usize,
    pub early_stop_tol: f64,
    pub checkpoint_every: Option<usize>,
    pub eval: Option<EvalHook>,
    pub seed: u64,
}

impl Default for WailConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            reg: DualRegularization { kind: crate::ot::RegKind::L2, epsilon: 0.1 },
            metric_scale: 1.0,
            reward_model: ModelSpec { form: ModelForm::Mlp, hidden: vec![32, 32], seed: 0 },
            reward_lr: 0.05,
            ot_inner_steps: 5,
            batch: Batch::Full,
            schedule: StepSchedule { delta0: 0.01, decay: 0.0 },
            lambda: 0.0,
            policy_mode: PolicyMode::Exact,
            damping: DEFAULT_DAMPING,
            early_stop: true,
            early_stop_window: 50,
            early_stop_tol: 1e-4,
            checkpoint_every: None,
            eval: None,
            seed: 0,
        }
    }
}

impl WailConfig {
    pub fn validate(&self) -> Result<()> {
        DualRegularization::new(self.reg.kind, self.reg.epsilon)?;
        StepSchedule::new(self.schedule.delta0, self.schedule.decay)?;
        let bad = |what: &str| Err(Error::Invalid(what.to_string()));
        if !(self.metric_scale > 0.0) {
            return bad("metric_scale must be positive");
        }
        if !(self.reward_lr > 0.0) {
            return bad("reward_lr must be positive");
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda must be non-negative");
        }
        if !(self.damping >= 0.0) {
            return bad("damping must be non-negative");
        }
        if self.early_stop && self.early_stop_window < 2 {
            return bad("early_stop_window must be at least 2");
        }
        if let Batch::MiniBatch { policy, expert } = self.batch {
            if policy == 0 || expert == 0 {
                return bad("mini-batch sizes must be positive");
            }
        }
        if let PolicyMode::Sampled { n_traj, max_len } = self.policy_mode {
            if n_traj == 0 || max_len == 0 {
                return bad("sampled mode needs n_traj and max_len >= 1");
            }
        }
        if self.checkpoint_every == Some(0) {
            return bad("checkpoint_every must be positive");
        }
        if self.reward_model.form == ModelForm::Mlp && self.reward_model.hidden.is_empty() {
            return bad("mlp reward model needs hidden widths");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct WailState {
    pub iteration: usize,
    pub model: PotentialModel,
    pub policy: SoftmaxPolicy,
    pub trace: Vec<f64>,
    pub schedule: StepSchedule,
    pub batch: Batch,
    /// Largest `|r(y) - r(x) + Omega|` seen so far.
    pub m_bound: f64,
}

impl WailState {
    pub fn initial(mdp: &TabularMdp, config: &WailConfig) -> Self {
        Self {
            iteration: 0,
            model: config.reward_model.build(mdp),
            policy: SoftmaxPolicy::uniform(mdp.n_states(), mdp.n_actions()),
            trace: Vec::new(),
            schedule: config.schedule,
            batch: config.batch,
            m_bound: 0.0,
        }
    }
}

/// Per-iteration generator: depends only on the run seed and the iteration.
pub(crate) fn iteration_rng(seed: u64, k: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(k as u128 * (1 << 20));
    rng
}

/// Policy-side measure for the current policy.
pub(crate) fn policy_measure(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    mode: PolicyMode,
    seed: u64,
) -> Result<OccupancyMeasure> {
    match mode {
        PolicyMode::Exact => occupancy_from_policy(mdp, policy),
        PolicyMode::Sampled { n_traj, max_len } => {
            empirical_occupancy(mdp, &sample_trajectories(mdp, policy, n_traj, max_len, seed)?)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyUpdate {
    pub policy: SoftmaxPolicy,
    pub surrogate: f64,
    pub kl: f64,
    pub entropy: f64,
}

/// One KL-constrained step against a fixed reward table.
#[allow(clippy::too_many_arguments)]
pub fn policy_update(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    reward: &[f64],
    lambda: f64,
    delta: f64,
    damping: f64,
    mode: PolicyMode,
    seed: u64,
) -> Result<PolicyUpdate> {
    let report = match mode {
        PolicyMode::Exact => entropy_reg_policy_gradient(mdp, policy, reward, lambda)?,
        PolicyMode::Sampled { n_traj, max_len } => {
            sampled_policy_gradient(mdp, policy, reward, lambda, n_traj, max_len, seed)?
        }
    };
    let step = kl_constrained_step_damped(mdp, policy, &report, delta, damping)?;
    Ok(PolicyUpdate {
        policy: step.policy,
        surrogate: report.surrogate_value,
        kl: step.kl,
        entropy: report.entropy,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationStats {
    pub objective: f64,
    pub update: PolicyUpdate,
}

/// One round: reward ascent then a policy step with `delta_{k+1}`.
pub fn wail_iteration(
    state: WailState,
    mdp: &TabularMdp,
    expert: &OccupancyMeasure,
    metric: &GroundMetric,
    reg: &DualRegularization,
    config: &WailConfig,
) -> Result<(WailState, IterationStats)> {
    let mut state = state;
    let k = state.iteration + 1;
    let source = policy_measure(mdp, &state.policy, config.policy_mode, config.seed ^ (k as u64).wrapping_mul(0x9e37))?;
    let pair = DiscreteMeasurePair::normalized(source.as_slice().to_vec(), expert.as_slice().to_vec())?;
    let mut rng = iteration_rng(config.seed, k, 1);
    let mut objective = f64::NAN;
    for _ in 0..config.ot_inner_steps.max(1) {
        let eval = reg_ot_step(&pair, metric, reg, &mut state.model, config.reward_lr, state.batch, &mut rng)
            .map_err(|e| match e {
                Error::Divergence { what, .. } => Error::Divergence { step: k, what },
                other => other,
            })?;
        objective = eval.value;
        state.m_bound = state.m_bound.max(eval.max_term);
    }
    let reward = state.model.clone_frozen().table(mdp)?;
    let delta = state.schedule.delta(k);
    let update = policy_update(
        mdp,
        &state.policy,
        &reward,
        config.lambda,
        delta,
        config.damping,
        config.policy_mode,
        config.seed.wrapping_add(k as u64 * 7919),
    )?;
    if !objective.is_finite() {
        return Err(Error::Divergence { step: k, what: "objective is not finite".into() });
    }
    state.policy = update.policy.clone();
    state.trace.push(objective);
    state.iteration = k;
    Ok((state, IterationStats { objective, update }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub iteration: usize,
    pub policy_logits: Vec<f64>,
    pub reward: PotentialModel,
}

#[derive(Debug, Clone)]
pub struct WailOutcome {
    pub policy: SoftmaxPolicy,
    pub reward: PotentialModel,
    pub log: RunLog,
    pub stopped_early: bool,
    /// Set when training aborted; the log holds the iterations before it.
    pub divergence: Option<String>,
    pub m_bound: f64,
    pub checkpoints: Vec<Checkpoint>,
}

/// Trailing-window flatness test used for early stopping.
pub fn is_cauchy_flat(trace: &[f64], window: usize, tol: f64) -> bool {
    if window < 2 || trace.len() < window {
        return false;
    }
    let tail = &trace[trace.len() - window..];
    let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
    hi - lo <= tol * (1.0 + trace.last().unwrap().abs())
}

pub fn train_wail(mdp: &TabularMdp, expert: &ExpertData, config: &WailConfig) -> Result<WailOutcome> {
    config.validate()?;
    let expert_measure = expert.measure(mdp)?;
    let metric = build_ground_metric(mdp, config.metric_scale)?;
    let mut state = WailState::initial(mdp, config);
    let mut log = RunLog::new(serde_json::json!({
        "algorithm": "wail",
        "config": config,
        "n_states": mdp.n_states(),
        "n_actions": mdp.n_actions(),
        "expert_pairs": expert.n_pairs(),
    }));
    let mut checkpoints = Vec::new();
    let mut stopped_early = false;
    let mut divergence = None;
    for _ in 0..config.iterations {
        let snapshot = (state.model.clone(), state.policy.clone());
        match wail_iteration(state.clone(), mdp, &expert_measure, &metric, &config.reg, config) {
            Ok((next, stats)) => {
                state = next;
                let k = state.iteration;
                let scaled = eval_hook(mdp, &state.policy, config.eval.as_ref(), k)?;
                log.rows.push(LogRow {
                    iteration: k,
                    objective: stats.objective,
                    policy_surrogate: stats.update.surrogate,
                    kl_step: stats.update.kl,
                    entropy: stats.update.entropy,
                    scaled_perf_eval: scaled,
                });
                if config.checkpoint_every.is_some_and(|n| k % n == 0) {
                    checkpoints.push(Checkpoint {
                        iteration: k,
                        policy_logits: state.policy.logits().to_vec(),
                        reward: state.model.clone(),
                    });
                }
                if config.early_stop && is_cauchy_flat(&state.trace, config.early_stop_window, config.early_stop_tol) {
                    stopped_early = true;
                    break;
                }
            }
            Err(Error::Divergence { step, what }) => {
                divergence = Some(format!("iteration {step}: {what}"));
                state.model = snapshot.0;
                state.policy = snapshot.1;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(WailOutcome {
        policy: state.policy,
        reward: state.model,
        log,
        stopped_early,
        divergence,
        m_bound: state.m_bound,
        checkpoints,
    })
}

pub(crate) fn eval_hook(mdp: &TabularMdp, policy: &SoftmaxPolicy, hook: Option<&EvalHook>, k: usize) -> Result<Option<f64>> {
    match hook {
        Some(h) if h.every > 0 && k % h.every == 0 => {
            Ok(Some(evaluate(mdp, policy, h.n_eval, h.seed, &h.references)?.scaled))
        }
        _ => Ok(None),
    }
}

/// Cauchy-envelope check of an objective trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    /// Max over `k < l` of `|L_k - L_l| / (M * sum_{i=k..l} sqrt(2 delta_i))`.
    pub max_ratio: f64,
    /// `max_ratio <= 1.5`; advisory since `M` is an estimate.
    pub envelope_holds: bool,
    /// Mean `|L_{k+1} - L_k|` over the first and last 10% of the trace.
    pub head_step: f64,
    pub tail_step: f64,
}

impl MonitorReport {
    /// `tail_step / head_step`; 0 for a flat head and tail.
    pub fn shrink(&self) -> f64 {
        if self.head_step == 0.0 {
            if self.tail_step == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.tail_step / self.head_step
        }
    }
}

pub const ENVELOPE_TOLERANCE: f64 = 0.5;

/// `trace[i]` is the objective at iteration `i + 1`, paired with `delta_{i+1}`.
pub fn convergence_monitor(trace: &[f64], schedule: &StepSchedule, m_bound: f64) -> Result<MonitorReport> {
    if trace.len() < 2 {
        return Err(Error::Invalid("convergence monitor needs at least two objective values".into()));
    }
    let n = trace.len();
    // prefix sums of sqrt(2 delta_i)
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + (2.0 * schedule.delta(i + 1)).sqrt();
    }
    let mut max_ratio: f64 = 0.0;
    for k in 0..n {
        for l in k + 1..n {
            let gap = (trace[k] - trace[l]).abs();
            if gap == 0.0 {
                continue;
            }
            let envelope = m_bound * (prefix[l + 1] - prefix[k]);
            let ratio = if envelope > 0.0 { gap / envelope } else { f64::INFINITY };
            max_ratio = max_ratio.max(ratio);
        }
    }
    let steps: Vec<f64> = trace.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let seg = (steps.len() / 10).max(1);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    Ok(MonitorReport {
        max_ratio,
        envelope_holds: max_ratio <= 1.0 + ENVELOPE_TOLERANCE,
        head_step: mean(&steps[..seg]),
        tail_step: mean(&steps[steps.len() - seg..]),
    })
}
