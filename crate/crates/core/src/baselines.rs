//! GAIL and behavior cloning on the same policy-optimization stack.
//!
//! The discriminator ascends `E_expert[log(1 - D)] + E_policy[log D]`, so it
//! is driven towards 1 on policy samples and 0 on expert samples; the policy
//! maximizes the surrogate reward `-log D`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::mdp::{SoftmaxPolicy, TabularMdp, Trajectory};
use crate::ot::Batch;
use crate::policy_opt::{StepSchedule, DEFAULT_DAMPING};
use crate::reward::{mdp_points, ModelForm, PotentialModel, SupportPoint};
use crate::runlog::{LogRow, RunLog};
use crate::wail::{eval_hook, is_cauchy_flat, iteration_rng, policy_measure, policy_update, EvalHook, ExpertData, ModelSpec, PolicyMode};

/// Probability clamp applied inside every logarithm.
pub const PROB_CLAMP: f64 = 1e-6;

/// `D(x) = sigmoid(logit_model(x))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discriminator {
    pub model: PotentialModel,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Discriminator {
    pub fn new(model: PotentialModel) -> Self {
        Self { model }
    }

    /// Raw sigmoid output.
    pub fn raw_prob(&self, point: &SupportPoint) -> Result<f64> {
        Ok(sigmoid(self.model.apply(point)?))
    }

    /// Output clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`, strictly inside (0, 1).
    pub fn prob(&self, point: &SupportPoint) -> Result<f64> {
        Ok(self.raw_prob(point)?.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
    }

    pub fn prob_embed(&self, embed: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.model.apply_embed(embed)?).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
    }
}

/// Weighted sample set fed to the discriminator.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub points: Vec<SupportPoint>,
    pub weights: Vec<f64>,
}

impl SampleSet {
    pub fn new(points: Vec<SupportPoint>, weights: Vec<f64>) -> Result<Self> {
        check_len(points.len(), weights.len())?;
        if points.is_empty() {
            return Err(Error::Invalid("empty sample set".into()));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) || !(weights.iter().sum::<f64>() > 0.0) {
            return Err(Error::Invalid("sample weights must be non-negative with positive mass".into()));
        }
        Ok(Self { points, weights })
    }

    /// Equal weights.
    pub fn uniform(points: Vec<SupportPoint>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0 / n.max(1) as f64; n])
    }

    /// The positive-weight pairs of a state-action measure.
    pub fn from_measure(mdp: &TabularMdp, weights: &[f64]) -> Result<Self> {
        check_len(mdp.n_pairs(), weights.len())?;
        let (pts, ws): (Vec<_>, Vec<_>) =
            mdp_points(mdp).into_iter().zip(weights.iter().copied()).filter(|(_, w)| *w > 0.0).unzip();
        Self::new(pts, ws)
    }
}

/// `sum_E w log(1 - D) + sum_pi w log D`, probabilities clamped.
pub fn gail_objective(disc: &Discriminator, expert: &SampleSet, policy: &SampleSet) -> Result<f64> {
    let mut total = 0.0;
    for (p, w) in expert.points.iter().zip(&expert.weights) {
        total += w * (1.0 - disc.prob(p)?).ln();
    }
    for (p, w) in policy.points.iter().zip(&policy.weights) {
        total += w * disc.prob(p)?.ln();
    }
    Ok(total)
}

/// Gradient of [`gail_objective`] in the discriminator parameters. Entries
/// whose probability sits on the clamp contribute nothing.
pub fn gail_objective_grad(disc: &Discriminator, expert: &SampleSet, policy: &SampleSet) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; disc.model.n_params()];
    let inside = |d: f64| d > PROB_CLAMP && d < 1.0 - PROB_CLAMP;
    for (p, &w) in expert.points.iter().zip(&expert.weights) {
        let d = disc.raw_prob(p)?;
        if inside(d) {
            // d/dz log(1 - sigmoid(z)) = -D
            disc.model.accumulate_grad(p, -w * d, &mut grad);
        }
    }
    for (p, &w) in policy.points.iter().zip(&policy.weights) {
        let d = disc.raw_prob(p)?;
        if inside(d) {
            // d/dz log sigmoid(z) = 1 - D
            disc.model.accumulate_grad(p, w * (1.0 - d), &mut grad);
        }
    }
    Ok(grad)
}

/// One ascent step; returns the updated discriminator and the objective
/// before the step.
pub fn gail_discriminator_step(
    disc: &Discriminator,
    expert: &SampleSet,
    policy: &SampleSet,
    lr: f64,
) -> Result<(Discriminator, f64)> {
    let value = gail_objective(disc, expert, policy)?;
    let grad = gail_objective_grad(disc, expert, policy)?;
    let mut next = disc.clone();
    next.model.params_mut().iter_mut().zip(&grad).for_each(|(w, g)| *w += lr * g);
    Ok((next, value))
}

/// `-log D(x)` with `D` clamped, in `[~1e-6, ~13.8155]`.
pub fn gail_surrogate_reward(disc: &Discriminator, point: &SupportPoint) -> Result<f64> {
    Ok(-disc.prob(point)?.ln())
}

pub fn surrogate_table(disc: &Discriminator, mdp: &TabularMdp) -> Result<Vec<f64>> {
    mdp_points(mdp).iter().map(|p| gail_surrogate_reward(disc, p)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GailConfig {
    pub iterations: usize,
    pub disc_model: ModelSpec,
    pub disc_lr: f64,
    pub disc_inner_steps: usize,
    pub batch: Batch,
    pub schedule: StepSchedule,
    pub lambda: f64,
    pub policy_mode: PolicyMode,
    pub damping: f64,
    pub early_stop: bool,
    pub early_stop_window: usize,
    pub early_stop_tol: f64,
    pub eval: Option<EvalHook>,
    pub seed: u64,
}

impl Default for GailConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            disc_model: ModelSpec { form: ModelForm::Mlp, hidden: vec![32, 32], seed: 0 },
            disc_lr: 0.1,
            disc_inner_steps: 5,
            batch: Batch::Full,
            schedule: StepSchedule { delta0: 0.01, decay: 0.0 },
            lambda: 0.0,
            policy_mode: PolicyMode::Exact,
            damping: DEFAULT_DAMPING,
            early_stop: false,
            early_stop_window: 50,
            early_stop_tol: 1e-4,
            eval: None,
            seed: 0,
        }
    }
}

impl GailConfig {
    pub fn validate(&self) -> Result<()> {
        StepSchedule::new(self.schedule.delta0, self.schedule.decay)?;
        if !(self.disc_lr > 0.0) || !(self.lambda >= 0.0) || !(self.damping >= 0.0) {
            return Err(Error::Invalid("gail needs disc_lr > 0, lambda >= 0, damping >= 0".into()));
        }
        if let Batch::MiniBatch { policy, expert } = self.batch {
            if policy == 0 || expert == 0 {
                return Err(Error::Invalid("mini-batch sizes must be positive".into()));
            }
        }
        if self.disc_model.form == ModelForm::Mlp && self.disc_model.hidden.is_empty() {
            return Err(Error::Invalid("mlp discriminator needs hidden widths".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GailOutcome {
    pub policy: SoftmaxPolicy,
    pub disc: Discriminator,
    pub log: RunLog,
    pub divergence: Option<String>,
}

fn resample(set: &SampleSet, n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Result<SampleSet> {
    use rand::distributions::{Distribution, WeightedIndex};
    let idx = WeightedIndex::new(&set.weights).map_err(|e| Error::Invalid(e.to_string()))?;
    SampleSet::uniform((0..n).map(|_| set.points[idx.sample(rng)].clone()).collect())
}

pub fn train_gail(mdp: &TabularMdp, expert: &ExpertData, config: &GailConfig) -> Result<GailOutcome> {
    config.validate()?;
    let expert_measure = expert.measure(mdp)?;
    let expert_set = SampleSet::from_measure(mdp, expert_measure.as_slice())?;
    let mut disc = Discriminator::new(config.disc_model.build(mdp));
    let mut policy = SoftmaxPolicy::uniform(mdp.n_states(), mdp.n_actions());
    let mut log = RunLog::new(serde_json::json!({
        "algorithm": "gail",
        "config": config,
        "n_states": mdp.n_states(),
        "n_actions": mdp.n_actions(),
        "expert_pairs": expert.n_pairs(),
    }));
    let mut trace = Vec::new();
    let mut divergence = None;
    for k in 1..=config.iterations {
        let source = policy_measure(mdp, &policy, config.policy_mode, config.seed ^ (k as u64).wrapping_mul(0x9e37))?;
        let policy_set = SampleSet::from_measure(mdp, source.as_slice())?;
        let mut rng = iteration_rng(config.seed, k, 2);
        let mut objective = f64::NAN;
        for _ in 0..config.disc_inner_steps.max(1) {
            let (e, p) = match config.batch {
                Batch::Full => (expert_set.clone(), policy_set.clone()),
                Batch::MiniBatch { policy: l1, expert: l2 } => {
                    (resample(&expert_set, l2, &mut rng)?, resample(&policy_set, l1, &mut rng)?)
                }
            };
            let (next, value) = gail_discriminator_step(&disc, &e, &p, config.disc_lr)?;
            objective = value;
            disc = next;
        }
        if !objective.is_finite() || disc.model.params().iter().any(|w| !w.is_finite()) {
            divergence = Some(format!("iteration {k}: discriminator objective is not finite"));
            break;
        }
        let reward = surrogate_table(&disc, mdp)?;
        let update = policy_update(
            mdp,
            &policy,
            &reward,
            config.lambda,
            config.schedule.delta(k),
            config.damping,
            config.policy_mode,
            config.seed.wrapping_add(k as u64 * 7919),
        )?;
        policy = update.policy;
        trace.push(objective);
        log.rows.push(LogRow {
            iteration: k,
            objective,
            policy_surrogate: update.surrogate,
            kl_step: update.kl,
            entropy: update.entropy,
            scaled_perf_eval: eval_hook(mdp, &policy, config.eval.as_ref(), k)?,
        });
        if config.early_stop && is_cauchy_flat(&trace, config.early_stop_window, config.early_stop_tol) {
            break;
        }
    }
    Ok(GailOutcome { policy, disc, log, divergence })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BcConfig {
    pub steps: usize,
    pub lr: f64,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self { steps: 2000, lr: 1.0 }
    }
}

/// Demonstrated action counts, flat `[s][a]`.
pub fn action_counts(n_states: usize, n_actions: usize, demos: &[Trajectory]) -> Result<Vec<f64>> {
    let mut counts = vec![0.0; n_states * n_actions];
    for t in demos {
        for &(s, a) in &t.steps {
            if s >= n_states || a >= n_actions {
                return Err(Error::Invalid("demonstration index out of bounds".into()));
            }
            counts[s * n_actions + a] += 1.0;
        }
    }
    Ok(counts)
}

/// Mean log-likelihood of the demonstrations and its logit gradient.
pub fn bc_log_likelihood(policy: &SoftmaxPolicy, counts: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_len(policy.logits().len(), counts.len())?;
    let na = policy.n_actions();
    let total: f64 = counts.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Invalid("no demonstrations".into()));
    }
    let mut ll = 0.0;
    let mut grad = vec![0.0; counts.len()];
    for s in 0..policy.n_states() {
        let c = &counts[s * na..(s + 1) * na];
        let n_s: f64 = c.iter().sum();
        if n_s == 0.0 {
            continue;
        }
        let lp = policy.log_probs(s);
        for a in 0..na {
            ll += c[a] * lp[a];
            grad[s * na + a] = (c[a] - n_s * lp[a].exp()) / total;
        }
    }
    Ok((ll / total, grad))
}

/// Full-batch maximum likelihood. Each visited state's logits move along
/// its own log-likelihood gradient normalized by the visit count, i.e.
/// `theta_s += lr (p_hat(.|s) - pi(.|s))`; unvisited states keep their zero
/// (uniform) logits.
pub fn train_bc(n_states: usize, n_actions: usize, demos: &[Trajectory], config: &BcConfig) -> Result<SoftmaxPolicy> {
    let counts = action_counts(n_states, n_actions, demos)?;
    if !(counts.iter().sum::<f64>() > 0.0) {
        return Err(Error::Invalid("no demonstrations".into()));
    }
    if !(config.lr > 0.0) {
        return Err(Error::Invalid("bc learning rate must be positive".into()));
    }
    let mut policy = SoftmaxPolicy::uniform(n_states, n_actions);
    for _ in 0..config.steps {
        for s in 0..n_states {
            let c = &counts[s * n_actions..(s + 1) * n_actions];
            let n_s: f64 = c.iter().sum();
            if n_s == 0.0 {
                continue;
            }
            let p = policy.probs(s);
            let row = &mut policy.logits_mut()[s * n_actions..(s + 1) * n_actions];
            for a in 0..n_actions {
                row[a] += config.lr * (c[a] / n_s - p[a]);
            }
        }
    }
    Ok(policy)
}
