//! Ground metrics, exact 1-Wasserstein oracles and the regularized
//! Kantorovich dual used for the reward step.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::mdp::TabularMdp;
use crate::reward::{mdp_points, PotentialModel, SupportPoint};

/// Largest support (per side) accepted by the exact oracles.
pub const ORACLE_SUPPORT_CAP: usize = 300;

/// Exponent clamp for the entropic penalty.
pub const ENTROPIC_EXP_CLAMP: f64 = 30.0;

const MASS_TOL: f64 = 1e-10;

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone)]
enum Geometry {
    Points { scale: f64 },
    Matrix { union: Vec<f64> },
}

/// Distances between a source (policy-side) and target (expert-side)
/// support. Distances within a side are available too, which the
/// Lipschitz dual needs.
#[derive(Debug, Clone)]
pub struct GroundMetric {
    src: Vec<SupportPoint>,
    tgt: Vec<SupportPoint>,
    cross: Vec<f64>,
    geometry: Geometry,
}

impl GroundMetric {
    /// Scaled Euclidean distance between embeddings.
    pub fn from_points(src: Vec<SupportPoint>, tgt: Vec<SupportPoint>, scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::Invalid("metric scale must be positive".into()));
        }
        if src.is_empty() || tgt.is_empty() {
            return Err(Error::Invalid("empty support".into()));
        }
        let dim = src[0].embed.len();
        if src.iter().chain(&tgt).any(|p| p.embed.len() != dim) {
            return Err(Error::Invalid("support embeddings have inconsistent widths".into()));
        }
        let cross = src
            .iter()
            .flat_map(|x| tgt.iter().map(move |y| scale * euclid(&x.embed, &y.embed)))
            .collect();
        Ok(Self { src, tgt, cross, geometry: Geometry::Points { scale } })
    }

    /// Arbitrary ground cost over the union support, source points first.
    /// Point ids are `0..n_src` then `n_src..n_src + n_tgt`.
    pub fn from_union_matrix(n_src: usize, n_tgt: usize, union: Vec<f64>) -> Result<Self> {
        let n = n_src + n_tgt;
        check_len(n * n, union.len())?;
        if n_src == 0 || n_tgt == 0 {
            return Err(Error::Invalid("empty support".into()));
        }
        if union.iter().any(|&d| !(d >= 0.0) || !d.is_finite()) {
            return Err(Error::Invalid("ground cost must be finite and non-negative".into()));
        }
        let src = (0..n_src).map(|i| SupportPoint::new(i, vec![])).collect();
        let tgt = (0..n_tgt).map(|j| SupportPoint::new(n_src + j, vec![])).collect();
        let cross = (0..n_src).flat_map(|i| (0..n_tgt).map(move |j| (i, j))).map(|(i, j)| union[i * n + n_src + j]).collect();
        Ok(Self { src, tgt, cross, geometry: Geometry::Matrix { union } })
    }

    pub fn n_src(&self) -> usize {
        self.src.len()
    }

    pub fn n_tgt(&self) -> usize {
        self.tgt.len()
    }

    pub fn src_points(&self) -> &[SupportPoint] {
        &self.src
    }

    pub fn tgt_points(&self) -> &[SupportPoint] {
        &self.tgt
    }

    /// `d(src_i, tgt_j)`.
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.cross[i * self.tgt.len() + j]
    }

    pub fn cross(&self) -> &[f64] {
        &self.cross
    }

    /// Distance between union indices (sources first, then targets).
    pub fn union_dist(&self, u: usize, v: usize) -> f64 {
        match &self.geometry {
            Geometry::Matrix { union } => union[u * self.n_union() + v],
            Geometry::Points { scale } => scale * euclid(&self.union_point(u).embed, &self.union_point(v).embed),
        }
    }

    pub fn n_union(&self) -> usize {
        self.src.len() + self.tgt.len()
    }

    fn union_point(&self, u: usize) -> &SupportPoint {
        if u < self.src.len() {
            &self.src[u]
        } else {
            &self.tgt[u - self.src.len()]
        }
    }

    /// Checks symmetry, zero self-distance and the triangle inequality on
    /// the union support.
    pub fn check_metric(&self, tol: f64) -> Result<()> {
        let n = self.n_union();
        let d: Vec<f64> = (0..n * n).map(|k| self.union_dist(k / n, k % n)).collect();
        for u in 0..n {
            if d[u * n + u].abs() > tol {
                return Err(Error::NotMetric(format!("d({u},{u}) = {}", d[u * n + u])));
            }
            for v in 0..n {
                if (d[u * n + v] - d[v * n + u]).abs() > tol {
                    return Err(Error::NotMetric(format!("asymmetric at ({u},{v})")));
                }
                for w in 0..n {
                    if d[u * n + w] > d[u * n + v] + d[v * n + w] + tol {
                        return Err(Error::NotMetric(format!("triangle inequality fails at ({u},{v},{w})")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Metric over all state-action pairs of `mdp` on both sides.
pub fn build_ground_metric(mdp: &TabularMdp, scale: f64) -> Result<GroundMetric> {
    let pts = mdp_points(mdp);
    GroundMetric::from_points(pts.clone(), pts, scale)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasurePair {
    source: Vec<f64>,
    target: Vec<f64>,
}

impl DiscreteMeasurePair {
    pub fn new(source: Vec<f64>, target: Vec<f64>) -> Result<Self> {
        for (name, w) in [("source", &source), ("target", &target)] {
            if w.is_empty() || w.iter().any(|&v| !(v >= 0.0)) {
                return Err(Error::Invalid(format!("{name} weights must be non-negative and non-empty")));
            }
            let s: f64 = w.iter().sum();
            if (s - 1.0).abs() > MASS_TOL {
                return Err(Error::Invalid(format!("{name} weights sum to {s}")));
            }
        }
        Ok(Self { source, target })
    }

    /// Renormalizes both sides before validating; for weights that carry
    /// solver round-off.
    pub fn normalized(source: Vec<f64>, target: Vec<f64>) -> Result<Self> {
        let norm = |w: Vec<f64>| {
            let s: f64 = w.iter().sum();
            w.into_iter().map(|v| v / s).collect::<Vec<_>>()
        };
        Self::new(norm(source), norm(target))
    }

    pub fn source(&self) -> &[f64] {
        &self.source
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn swapped(&self) -> Self {
        Self { source: self.target.clone(), target: self.source.clone() }
    }

    fn check(&self, metric: &GroundMetric) -> Result<()> {
        check_len(metric.n_src(), self.source.len())?;
        check_len(metric.n_tgt(), self.target.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegKind {
    Entropic,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualRegularization {
    pub kind: RegKind,
    pub epsilon: f64,
}

impl DualRegularization {
    pub fn new(kind: RegKind, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::Invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self { kind, epsilon })
    }

    pub fn l2(epsilon: f64) -> Result<Self> {
        Self::new(RegKind::L2, epsilon)
    }

    pub fn entropic(epsilon: f64) -> Result<Self> {
        Self::new(RegKind::Entropic, epsilon)
    }

    /// Penalty value and its derivative at slack `z = r(y) - r(x) - d(x,y)`,
    /// plus whether the entropic exponent hit the clamp.
    fn penalty(&self, z: f64) -> (f64, f64, bool) {
        let eps = self.epsilon;
        match self.kind {
            RegKind::Entropic => {
                let t = z / eps;
                if t > ENTROPIC_EXP_CLAMP {
                    (-eps * ENTROPIC_EXP_CLAMP.exp(), 0.0, true)
                } else {
                    let e = t.exp();
                    (-eps * e, -e, false)
                }
            }
            RegKind::L2 => {
                if z > 0.0 {
                    (-z * z / (4.0 * eps), -z / (2.0 * eps), false)
                } else {
                    (0.0, 0.0, false)
                }
            }
        }
    }
}

/// Exact 1-Wasserstein distance with its optimal plan (row-major
/// `n_src x n_tgt`), solved as a min-cost flow.
pub fn w1_primal_lp(pair: &DiscreteMeasurePair, metric: &GroundMetric) -> Result<(f64, Vec<f64>)> {
    pair.check(metric)?;
    let (n, m) = (metric.n_src(), metric.n_tgt());
    if n.max(m) > ORACLE_SUPPORT_CAP {
        return Err(Error::SupportTooLarge { size: n.max(m), cap: ORACLE_SUPPORT_CAP });
    }
    let plan = transport_flow(pair.source(), pair.target(), metric.cross(), n, m);
    let value = plan.iter().zip(metric.cross()).map(|(p, d)| p * d).sum();
    Ok((value, plan))
}

/// Successive shortest paths on the bipartite transport network, Dijkstra
/// with node potentials over the dense residual graph.
fn transport_flow(supply: &[f64], demand: &[f64], cost: &[f64], n: usize, m: usize) -> Vec<f64> {
    const ZERO: f64 = 1e-15;
    let mut supply = supply.to_vec();
    let mut demand = demand.to_vec();
    let mut flow = vec![0.0; n * m];
    // nodes 0..n are sources, n..n+m sinks
    let mut pot = vec![0.0; n + m];
    let mut dist = vec![0.0; n + m];
    let mut prev = vec![usize::MAX; n + m];
    let mut done = vec![false; n + m];
    loop {
        let remaining: f64 = supply.iter().sum();
        if remaining <= 1e-14 || demand.iter().all(|&d| d <= ZERO) {
            break;
        }
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        prev.iter_mut().for_each(|p| *p = usize::MAX);
        done.iter_mut().for_each(|d| *d = false);
        for i in 0..n {
            if supply[i] > ZERO {
                dist[i] = 0.0;
            }
        }
        let mut sink = usize::MAX;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..n + m {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u >= n && demand[u - n] > ZERO {
                sink = u;
                break;
            }
            if u < n {
                for j in 0..m {
                    let v = n + j;
                    if done[v] {
                        continue;
                    }
                    let rc = (cost[u * m + j] + pot[u] - pot[v]).max(0.0);
                    if dist[u] + rc < dist[v] {
                        dist[v] = dist[u] + rc;
                        prev[v] = u;
                    }
                }
            } else {
                let j = u - n;
                for i in 0..n {
                    if done[i] || flow[i * m + j] <= ZERO {
                        continue;
                    }
                    let rc = (-cost[i * m + j] + pot[u] - pot[i]).max(0.0);
                    if dist[u] + rc < dist[i] {
                        dist[i] = dist[u] + rc;
                        prev[i] = u;
                    }
                }
            }
        }
        if sink == usize::MAX {
            break;
        }
        let reach = dist[sink];
        for v in 0..n + m {
            pot[v] += dist[v].min(reach);
        }
        // bottleneck along the path
        let mut amount = demand[sink - n];
        let mut v = sink;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u >= n {
                amount = amount.min(flow[v * m + (u - n)]);
            }
            v = u;
        }
        amount = amount.min(supply[v]);
        let mut v = sink;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u < n {
                flow[u * m + (v - n)] += amount;
            } else {
                let f = &mut flow[v * m + (u - n)];
                *f = (*f - amount).max(0.0);
            }
            v = u;
        }
        supply[v] -= amount;
        demand[sink - n] -= amount;
    }
    flow
}

/// Lipschitz dual: maximize `<f, target> - <f, source>` subject to
/// `|f(u) - f(v)| <= d(u, v)` over the union support. Returns the value and
/// the potential on the union support (sources first).
pub fn w1_dual_lp(pair: &DiscreteMeasurePair, metric: &GroundMetric) -> Result<(f64, Vec<f64>)> {
    pair.check(metric)?;
    let (n, m) = (metric.n_src(), metric.n_tgt());
    if n.max(m) > ORACLE_SUPPORT_CAP {
        return Err(Error::SupportTooLarge { size: n.max(m), cap: ORACLE_SUPPORT_CAP });
    }
    metric.check_metric(1e-9)?;
    let total = n + m;
    let d: Vec<f64> = (0..total * total).map(|k| metric.union_dist(k / total, k % total)).collect();

    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = (0..total)
        .map(|u| {
            let coeff = if u < n { -pair.source()[u] } else { pair.target()[u - n] };
            // the objective is shift invariant; pin the first potential
            let bounds = if u == 0 { (0.0, 0.0) } else { (f64::NEG_INFINITY, f64::INFINITY) };
            lp.add_var(coeff, bounds)
        })
        .collect();
    for u in 0..total {
        for v in u + 1..total {
            let duv = d[u * total + v];
            lp.add_constraint(&[(vars[u], 1.0), (vars[v], -1.0)], ComparisonOp::Le, duv);
            lp.add_constraint(&[(vars[v], 1.0), (vars[u], -1.0)], ComparisonOp::Le, duv);
        }
    }
    let sol = lp.solve().map_err(|e| Error::Lp(e.to_string()))?;
    let raw: Vec<f64> = vars.iter().map(|&v| sol[v]).collect();
    // Lipschitz envelope removes solver round-off: equal to `raw` wherever
    // the constraints already hold.
    let potential: Vec<f64> = (0..total)
        .map(|u| (0..total).map(|v| raw[v] + d[u * total + v]).fold(f64::INFINITY, f64::min))
        .collect();
    let value = dual_value(pair, &potential[..n], &potential[n..]);
    Ok((value, potential))
}

fn dual_value(pair: &DiscreteMeasurePair, src_vals: &[f64], tgt_vals: &[f64]) -> f64 {
    let t: f64 = pair.target().iter().zip(tgt_vals).map(|(w, r)| w * r).sum();
    let s: f64 = pair.source().iter().zip(src_vals).map(|(w, r)| w * r).sum();
    t - s
}

/// Value and gradients of the regularized dual objective.
#[derive(Debug, Clone, PartialEq)]
pub struct RegDualEval {
    pub value: f64,
    pub grad_src: Vec<f64>,
    pub grad_tgt: Vec<f64>,
    /// Number of cross pairs whose entropic exponent was clamped.
    pub clamped: usize,
    /// `max |r(y) - r(x) + Omega|` over cross pairs with positive weight.
    pub max_term: f64,
}

/// `<r, tgt> - <r, src> + sum_ij src_i tgt_j Omega(r_j - r_i - d_ij)` with
/// its gradient in the potential values.
pub fn reg_dual_eval(
    values_src: &[f64],
    values_tgt: &[f64],
    pair: &DiscreteMeasurePair,
    metric: &GroundMetric,
    reg: &DualRegularization,
) -> Result<RegDualEval> {
    pair.check(metric)?;
    check_len(metric.n_src(), values_src.len())?;
    check_len(metric.n_tgt(), values_tgt.len())?;
    let (src, tgt) = (pair.source(), pair.target());
    let mut value = dual_value(pair, values_src, values_tgt);
    let mut grad_src: Vec<f64> = src.iter().map(|w| -w).collect();
    let mut grad_tgt = tgt.to_vec();
    let mut clamped = 0;
    let mut max_term: f64 = 0.0;
    let m = metric.n_tgt();
    for (i, &wi) in src.iter().enumerate() {
        if wi == 0.0 {
            continue;
        }
        let row = &metric.cross()[i * m..(i + 1) * m];
        for (j, &wj) in tgt.iter().enumerate() {
            if wj == 0.0 {
                continue;
            }
            let z = values_tgt[j] - values_src[i] - row[j];
            let (pen, dpen, hit) = reg.penalty(z);
            if hit {
                clamped += 1;
            }
            let w = wi * wj;
            max_term = max_term.max((values_tgt[j] - values_src[i] + pen).abs());
            value += w * pen;
            grad_tgt[j] += w * dpen;
            grad_src[i] -= w * dpen;
        }
    }
    Ok(RegDualEval { value, grad_src, grad_tgt, clamped, max_term })
}

pub fn reg_dual_objective(
    values_src: &[f64],
    values_tgt: &[f64],
    pair: &DiscreteMeasurePair,
    metric: &GroundMetric,
    reg: &DualRegularization,
) -> Result<f64> {
    Ok(reg_dual_eval(values_src, values_tgt, pair, metric, reg)?.value)
}

pub fn reg_dual_gradient(
    values_src: &[f64],
    values_tgt: &[f64],
    pair: &DiscreteMeasurePair,
    metric: &GroundMetric,
    reg: &DualRegularization,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let e = reg_dual_eval(values_src, values_tgt, pair, metric, reg)?;
    Ok((e.grad_src, e.grad_tgt))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Batch {
    /// Exact expectations over the given weights.
    Full,
    /// `policy` points drawn from the source weights and `expert` points from
    /// the target weights, with replacement; every cross pair is penalized.
    MiniBatch { policy: usize, expert: usize },
}

/// One ascent step on the regularized dual through the model parameters.
/// Returns the objective at the pre-step parameters.
pub fn reg_ot_step(
    pair: &DiscreteMeasurePair,
    metric: &GroundMetric,
    reg: &DualRegularization,
    model: &mut PotentialModel,
    lr: f64,
    batch: Batch,
    rng: &mut ChaCha8Rng,
) -> Result<RegDualEval> {
    pair.check(metric)?;
    for p in metric.src_points().iter().chain(metric.tgt_points()) {
        model.apply(p)?;
    }
    let (eval, src_pts, tgt_pts) = match batch {
        Batch::Full => {
            let vs: Vec<f64> = metric.src_points().iter().map(|p| model.eval_unchecked(p.id, &p.embed)).collect();
            let vt: Vec<f64> = metric.tgt_points().iter().map(|p| model.eval_unchecked(p.id, &p.embed)).collect();
            let eval = reg_dual_eval(&vs, &vt, pair, metric, reg)?;
            (eval, metric.src_points().iter().collect::<Vec<_>>(), metric.tgt_points().iter().collect::<Vec<_>>())
        }
        Batch::MiniBatch { policy, expert } => {
            if policy == 0 || expert == 0 {
                return Err(Error::Invalid("mini-batch sizes must be positive".into()));
            }
            let si = WeightedIndex::new(pair.source()).map_err(|e| Error::Invalid(e.to_string()))?;
            let ti = WeightedIndex::new(pair.target()).map_err(|e| Error::Invalid(e.to_string()))?;
            let xs: Vec<usize> = (0..policy).map(|_| si.sample(rng)).collect();
            let ys: Vec<usize> = (0..expert).map(|_| ti.sample(rng)).collect();
            let cross = xs.iter().flat_map(|&i| ys.iter().map(move |&j| (i, j))).map(|(i, j)| metric.dist(i, j)).collect();
            let sub = GroundMetric {
                src: xs.iter().map(|&i| metric.src_points()[i].clone()).collect(),
                tgt: ys.iter().map(|&j| metric.tgt_points()[j].clone()).collect(),
                cross,
                geometry: Geometry::Points { scale: 1.0 },
            };
            let sub_pair = DiscreteMeasurePair {
                source: vec![1.0 / policy as f64; policy],
                target: vec![1.0 / expert as f64; expert],
            };
            let vs: Vec<f64> = sub.src.iter().map(|p| model.eval_unchecked(p.id, &p.embed)).collect();
            let vt: Vec<f64> = sub.tgt.iter().map(|p| model.eval_unchecked(p.id, &p.embed)).collect();
            let eval = reg_dual_eval(&vs, &vt, &sub_pair, &sub, reg)?;
            let src_pts = xs.iter().map(|&i| &metric.src_points()[i]).collect();
            let tgt_pts = ys.iter().map(|&j| &metric.tgt_points()[j]).collect();
            (eval, src_pts, tgt_pts)
        }
    };
    let mut grad = vec![0.0; model.n_params()];
    for (p, &g) in src_pts.iter().zip(&eval.grad_src).chain(tgt_pts.iter().zip(&eval.grad_tgt)) {
        if g != 0.0 {
            model.accumulate_grad(p, g, &mut grad);
        }
    }
    if !eval.value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Divergence { step: 0, what: "regularized dual objective is not finite".into() });
    }
    model.params_mut().iter_mut().zip(&grad).for_each(|(w, g)| *w += lr * g);
    Ok(eval)
}

/// Stochastic (or full-batch) gradient ascent of the regularized dual.
/// Returns the objective recorded before each step.
#[allow(clippy::too_many_arguments)]
pub fn reg_ot_fit(
    pair: &DiscreteMeasurePair,
    metric: &GroundMetric,
    reg: &DualRegularization,
    mut model: PotentialModel,
    steps: usize,
    lr: f64,
    batch: Batch,
    seed: u64,
) -> Result<(PotentialModel, Vec<f64>)> {
    if !(lr > 0.0) {
        return Err(Error::Invalid("learning rate must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Vec::with_capacity(steps);
    for step in 0..steps {
        let eval = reg_ot_step(pair, metric, reg, &mut model, lr, batch, &mut rng).map_err(|e| match e {
            Error::Divergence { what, .. } => Error::Divergence { step, what },
            other => other,
        })?;
        trace.push(eval.value);
    }
    Ok((model, trace))
}

/// Model values on both sides of the metric's support.
pub fn potential_values(model: &PotentialModel, metric: &GroundMetric) -> Result<(Vec<f64>, Vec<f64>)> {
    let vs = metric.src_points().iter().map(|p| model.apply(p)).collect::<Result<Vec<_>>>()?;
    let vt = metric.tgt_points().iter().map(|p| model.apply(p)).collect::<Result<Vec<_>>>()?;
    Ok((vs, vt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn line_metric(n: usize) -> GroundMetric {
        let pts: Vec<SupportPoint> = (0..n).map(|i| SupportPoint::new(i, vec![i as f64])).collect();
        GroundMetric::from_points(pts.clone(), pts, 1.0).unwrap()
    }

    #[test]
    fn euclidean_entries() {
        let a = SupportPoint::new(0, vec![0.0, 0.0, 1.0]);
        let b = SupportPoint::new(1, vec![0.0, 0.0, 0.0]);
        let m = GroundMetric::from_points(vec![a.clone()], vec![b, a], 1.0).unwrap();
        assert_eq!(m.dist(0, 0), 1.0);
        assert_eq!(m.dist(0, 1), 0.0);
        assert!(GroundMetric::from_points(vec![], vec![], 1.0).is_err());
    }

    #[test]
    fn primal_simple_cases() {
        let m = line_metric(3);
        let same = DiscreteMeasurePair::new(vec![0.2, 0.3, 0.5], vec![0.2, 0.3, 0.5]).unwrap();
        assert_abs_diff_eq!(w1_primal_lp(&same, &m).unwrap().0, 0.0, epsilon = 1e-12);

        let shifted = DiscreteMeasurePair::new(vec![0.0, 0.5, 0.5], vec![0.5, 0.5, 0.0]).unwrap();
        let (v, plan) = w1_primal_lp(&shifted, &m).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
        for i in 0..3 {
            let row: f64 = plan[i * 3..i * 3 + 3].iter().sum();
            assert_abs_diff_eq!(row, shifted.source()[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn point_masses() {
        let x = SupportPoint::new(0, vec![0.0]);
        let y = SupportPoint::new(1, vec![2.0]);
        let m = GroundMetric::from_points(vec![x], vec![y], 1.0).unwrap();
        let pair = DiscreteMeasurePair::new(vec![1.0], vec![1.0]).unwrap();
        assert_abs_diff_eq!(w1_primal_lp(&pair, &m).unwrap().0, 2.0);
        let (v, f) = w1_dual_lp(&pair, &m).unwrap();
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f[1] - f[0], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn dual_rejects_non_metric() {
        // d(0,2) = 5 > d(0,1) + d(1,2) = 2
        let d = vec![0.0, 1.0, 5.0, 1.0, 0.0, 1.0, 5.0, 1.0, 0.0];
        let m = GroundMetric::from_union_matrix(2, 1, d).unwrap();
        let pair = DiscreteMeasurePair::new(vec![0.5, 0.5], vec![1.0]).unwrap();
        assert!(matches!(w1_dual_lp(&pair, &m), Err(Error::NotMetric(_))));
        assert!(w1_primal_lp(&pair, &m).is_ok());
    }

    #[test]
    fn oracle_cap() {
        let pts: Vec<SupportPoint> = (0..301).map(|i| SupportPoint::new(i, vec![i as f64])).collect();
        let m = GroundMetric::from_points(pts.clone(), pts, 1.0).unwrap();
        let w = vec![1.0 / 301.0; 301];
        let pair = DiscreteMeasurePair::normalized(w.clone(), w).unwrap();
        assert!(matches!(w1_primal_lp(&pair, &m), Err(Error::SupportTooLarge { .. })));
    }

    #[test]
    fn objective_plug_in_values() {
        let p = SupportPoint::new(0, vec![0.0]);
        let m = GroundMetric::from_points(vec![p.clone()], vec![p], 1.0).unwrap();
        let pair = DiscreteMeasurePair::new(vec![1.0], vec![1.0]).unwrap();
        let ent = DualRegularization::entropic(0.1).unwrap();
        let e = reg_dual_eval(&[0.0], &[0.0], &pair, &m, &ent).unwrap();
        assert_abs_diff_eq!(e.value, -0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(e.grad_src[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.grad_tgt[0], 0.0, epsilon = 1e-15);

        let m = line_metric(3);
        let pair = DiscreteMeasurePair::new(vec![0.2, 0.3, 0.5], vec![0.6, 0.1, 0.3]).unwrap();
        let l2 = DualRegularization::l2(0.01).unwrap();
        // d_ii = 0 puts z exactly on the hinge; the penalty is still zero there
        let e = reg_dual_eval(&[0.0; 3], &[0.0; 3], &pair, &m, &l2).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.grad_src, vec![-0.2, -0.3, -0.5]);
        assert_eq!(e.grad_tgt, vec![0.6, 0.1, 0.3]);
    }

    #[test]
    fn entropic_clamp_is_counted() {
        let m = line_metric(2);
        let pair = DiscreteMeasurePair::new(vec![0.5, 0.5], vec![0.5, 0.5]).unwrap();
        let ent = DualRegularization::entropic(0.01).unwrap();
        let e = reg_dual_eval(&[0.0, 0.0], &[5.0, 0.0], &pair, &m, &ent).unwrap();
        assert!(e.clamped >= 1);
        assert!(e.value.is_finite());
    }

    #[test]
    fn fit_zero_steps_is_identity() {
        let m = line_metric(3);
        let pair = DiscreteMeasurePair::new(vec![0.0, 0.5, 0.5], vec![0.5, 0.5, 0.0]).unwrap();
        let model = PotentialModel::tabular(3);
        let (out, trace) =
            reg_ot_fit(&pair, &m, &DualRegularization::l2(0.01).unwrap(), model.clone(), 0, 0.1, Batch::Full, 0).unwrap();
        assert_eq!(out, model);
        assert!(trace.is_empty());
    }

    #[test]
    fn regularization_validation() {
        assert!(DualRegularization::l2(0.0).is_err());
        assert!(DualRegularization::entropic(-1.0).is_err());
        assert!(DiscreteMeasurePair::new(vec![0.5, 0.4], vec![1.0]).is_err());
    }
}
