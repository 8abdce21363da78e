//! Built-in tabular environments.
//!
//! State embeddings are coordinates scaled to `[0, 1]`; action embeddings are
//! one-hot. Episodic terminations are modelled as a move into a zero-reward
//! absorbing state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum EnvSpec {
    Gridworld {
        width: usize,
        height: usize,
        /// Goal cell `[x, y]`; defaults to the bottom-right corner.
        #[serde(default)]
        goal: Option<[usize; 2]>,
        #[serde(default)]
        step_cost: f64,
        #[serde(default)]
        slip: f64,
        #[serde(default)]
        start: GridStart,
        #[serde(default = "default_gamma")]
        gamma: f64,
    },
    Chain {
        n: usize,
        #[serde(default)]
        slip: f64,
        #[serde(default = "default_gamma")]
        gamma: f64,
    },
    Cliff {
        width: usize,
        height: usize,
        #[serde(default = "default_gamma")]
        gamma: f64,
    },
    MountainCar {
        positions: usize,
        velocities: usize,
        #[serde(default = "default_gamma")]
        gamma: f64,
    },
    Random {
        n_states: usize,
        n_actions: usize,
        #[serde(default = "default_gamma")]
        gamma: f64,
        #[serde(default)]
        seed: u64,
    },
}

/// Start distribution of a gridworld. Concentrated starts keep
/// [`START_FLOOR`] of the mass spread uniformly so every state has positive
/// start probability.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridStart {
    /// The top-left cell.
    Corner,
    #[default]
    Uniform,
    Cell([usize; 2]),
}

pub const START_FLOOR: f64 = 0.01;

fn default_gamma() -> f64 {
    0.98
}

impl EnvSpec {
    /// Deterministic gridworld with a uniform start and a bottom-right goal.
    pub fn gridworld(width: usize, height: usize) -> Self {
        EnvSpec::Gridworld {
            width,
            height,
            goal: None,
            step_cost: 0.0,
            slip: 0.0,
            start: GridStart::Uniform,
            gamma: default_gamma(),
        }
    }
}

pub fn build_environment(spec: &EnvSpec) -> Result<TabularMdp> {
    match *spec {
        EnvSpec::Gridworld { width, height, goal, step_cost, slip, start, gamma } => {
            gridworld(width, height, goal, step_cost, slip, start, gamma)
        }
        EnvSpec::Chain { n, slip, gamma } => chain(n, slip, gamma),
        EnvSpec::Cliff { width, height, gamma } => cliff(width, height, gamma),
        EnvSpec::MountainCar { positions, velocities, gamma } => mountain_car(positions, velocities, gamma),
        EnvSpec::Random { n_states, n_actions, gamma, seed } => random_mdp(n_states, n_actions, gamma, seed),
    }
}

fn one_hot(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn unit(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        i as f64 / (n - 1) as f64
    }
}

const MOVES: [(i64, i64); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Invalid(format!("{name} must lie in [0,1], got {p}")));
    }
    Ok(())
}

/// Four-connected grid, actions up/down/left/right; walls keep the agent in
/// place. With probability `slip` the move direction is drawn uniformly.
/// Reward is 1 in the goal cell and `-step_cost` elsewhere.
pub fn gridworld(
    width: usize,
    height: usize,
    goal: Option<[usize; 2]>,
    step_cost: f64,
    slip: f64,
    start: GridStart,
    gamma: f64,
) -> Result<TabularMdp> {
    if width == 0 || height == 0 {
        return Err(Error::Invalid("gridworld needs positive width and height".into()));
    }
    check_prob("slip", slip)?;
    let [gx, gy] = goal.unwrap_or([width - 1, height - 1]);
    if gx >= width || gy >= height {
        return Err(Error::Invalid("goal outside the grid".into()));
    }
    let n = width * height;
    let na = MOVES.len();
    let mut p = vec![0.0; n * na * n];
    let target = |s: usize, (dx, dy): (i64, i64)| {
        let (x, y) = ((s % width) as i64, (s / width) as i64);
        let (nx, ny) = (x + dx, y + dy);
        if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
            s
        } else {
            ny as usize * width + nx as usize
        }
    };
    for s in 0..n {
        for (a, &mv) in MOVES.iter().enumerate() {
            let row = &mut p[(s * na + a) * n..(s * na + a + 1) * n];
            row[target(s, mv)] += 1.0 - slip;
            for &other in &MOVES {
                row[target(s, other)] += slip / na as f64;
            }
        }
    }
    let goal_state = gy * width + gx;
    let reward = (0..n * na).map(|k| if k / na == goal_state { 1.0 } else { -step_cost }).collect();
    let state_embed = (0..n).map(|s| vec![unit(s % width, width), unit(s / width, height)]).collect();
    let mu0 = match start {
        GridStart::Uniform => vec![1.0 / n as f64; n],
        GridStart::Corner | GridStart::Cell(_) => {
            let [sx, sy] = if let GridStart::Cell(c) = start { c } else { [0, 0] };
            if sx >= width || sy >= height {
                return Err(Error::Invalid("start cell outside the grid".into()));
            }
            let mut mu0 = vec![START_FLOOR / n as f64; n];
            mu0[sy * width + sx] += 1.0 - START_FLOOR;
            mu0
        }
    };
    TabularMdp::new(n, na, p, mu0, gamma, Some(reward), state_embed, one_hot(na))
}

/// Line of `n` states, actions left/right, reward 1 at the right end.
pub fn chain(n: usize, slip: f64, gamma: f64) -> Result<TabularMdp> {
    if n == 0 {
        return Err(Error::Invalid("chain needs at least one state".into()));
    }
    check_prob("slip", slip)?;
    let mut p = vec![0.0; n * 2 * n];
    for s in 0..n {
        let left = s.saturating_sub(1);
        let right = (s + 1).min(n - 1);
        for a in 0..2 {
            let (want, other) = if a == 0 { (left, right) } else { (right, left) };
            let row = &mut p[(s * 2 + a) * n..(s * 2 + a + 1) * n];
            row[want] += 1.0 - slip;
            row[other] += slip;
        }
    }
    let reward = (0..2 * n).map(|k| if k / 2 == n - 1 { 1.0 } else { 0.0 }).collect();
    let embed = (0..n).map(|s| vec![unit(s, n)]).collect();
    TabularMdp::new(n, 2, p, vec![1.0 / n as f64; n], gamma, Some(reward), embed, one_hot(2))
}

/// Cliff walk: start bottom-left, goal bottom-right, the cells between them
/// on the bottom row are a cliff (reward -1, back to start). Reaching the
/// goal pays 1 and moves to an absorbing state (the last state index).
pub fn cliff(width: usize, height: usize, gamma: f64) -> Result<TabularMdp> {
    if width < 3 || height < 2 {
        return Err(Error::Invalid("cliff needs width >= 3 and height >= 2".into()));
    }
    let cells = width * height;
    let n = cells + 1;
    let absorbing = cells;
    let na = MOVES.len();
    let start = (height - 1) * width;
    let goal = cells - 1;
    let is_cliff = |c: usize| c / width == height - 1 && c % width > 0 && c % width < width - 1;
    let mut p = vec![0.0; n * na * n];
    let mut reward = vec![0.0; n * na];
    for s in 0..n {
        for (a, &(dx, dy)) in MOVES.iter().enumerate() {
            let row = &mut p[(s * na + a) * n..(s * na + a + 1) * n];
            if s == absorbing || s == goal {
                row[absorbing] = 1.0;
                if s == goal {
                    reward[s * na + a] = 1.0;
                }
                continue;
            }
            let (x, y) = ((s % width) as i64 + dx, (s / width) as i64 + dy);
            let next = if x < 0 || y < 0 || x >= width as i64 || y >= height as i64 {
                s
            } else {
                y as usize * width + x as usize
            };
            if is_cliff(next) {
                row[start] = 1.0;
                reward[s * na + a] = -1.0;
            } else {
                row[next] = 1.0;
            }
        }
    }
    let mut mu = vec![0.1 / n as f64; n];
    mu[start] += 0.9;
    let mut embed: Vec<Vec<f64>> = (0..cells).map(|c| vec![unit(c % width, width), unit(c / width, height)]).collect();
    embed.push(vec![1.0, 1.5]);
    TabularMdp::new(n, na, p, mu, gamma, Some(reward), embed, one_hot(na))
}

/// Mountain-car dynamics on a position x velocity grid. The successor of a
/// grid point is spread over the neighbouring grid points by bilinear
/// weights. Reaching `x >= 0.5` ends in a zero-reward absorbing state; every
/// other step costs 1.
pub fn mountain_car(positions: usize, velocities: usize, gamma: f64) -> Result<TabularMdp> {
    if positions < 2 || velocities < 2 {
        return Err(Error::Invalid("mountain car needs at least 2x2 grid points".into()));
    }
    const X_MIN: f64 = -1.2;
    const X_MAX: f64 = 0.6;
    const V_MAX: f64 = 0.07;
    const GOAL: f64 = 0.5;
    let grid = positions * velocities;
    let n = grid + 1;
    let absorbing = grid;
    let na = 3;
    let xs: Vec<f64> = (0..positions).map(|i| X_MIN + (X_MAX - X_MIN) * unit(i, positions)).collect();
    let vs: Vec<f64> = (0..velocities).map(|j| -V_MAX + 2.0 * V_MAX * unit(j, velocities)).collect();
    // fractional grid coordinate and the two bracketing indices with weights
    let bracket = |val: f64, lo: f64, hi: f64, m: usize| {
        let t = ((val.clamp(lo, hi) - lo) / (hi - lo)) * (m - 1) as f64;
        let i0 = (t.floor() as usize).min(m - 2);
        let w1 = t - i0 as f64;
        [(i0, 1.0 - w1), (i0 + 1, w1)]
    };
    let mut p = vec![0.0; n * na * n];
    let mut reward = vec![0.0; n * na];
    for s in 0..n {
        for a in 0..na {
            let row = &mut p[(s * na + a) * n..(s * na + a + 1) * n];
            if s == absorbing {
                row[absorbing] = 1.0;
                continue;
            }
            reward[s * na + a] = -1.0;
            let (x, v) = (xs[s / velocities], vs[s % velocities]);
            if x >= GOAL {
                row[absorbing] = 1.0;
                continue;
            }
            let mut v2 = (v + (a as f64 - 1.0) * 0.001 - 0.0025 * (3.0 * x).cos()).clamp(-V_MAX, V_MAX);
            let x2 = (x + v2).clamp(X_MIN, X_MAX);
            if x2 <= X_MIN {
                v2 = v2.max(0.0);
            }
            for (i, wi) in bracket(x2, X_MIN, X_MAX, positions) {
                for (j, wj) in bracket(v2, -V_MAX, V_MAX, velocities) {
                    row[i * velocities + j] += wi * wj;
                }
            }
        }
    }
    let mut mu = vec![0.0; n];
    let mut starts = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        if (-0.6..=-0.4).contains(&x) {
            let j = velocities / 2;
            mu[i * velocities + j] += 1.0;
            starts += 1.0;
        }
    }
    let spread = 0.05 / n as f64;
    if starts == 0.0 {
        mu.iter_mut().for_each(|m| *m = 1.0 / n as f64);
    } else {
        mu.iter_mut().for_each(|m| *m = *m / starts * 0.95 + spread);
    }
    let mut embed: Vec<Vec<f64>> = (0..grid).map(|s| vec![unit(s / velocities, positions), unit(s % velocities, velocities)]).collect();
    embed.push(vec![1.5, 0.5]);
    TabularMdp::new(n, na, p, mu, gamma, Some(reward), embed, one_hot(na))
}

/// Random dense MDP with uniform random rewards and 2-D random state embeddings.
pub fn random_mdp(n_states: usize, n_actions: usize, gamma: f64, seed: u64) -> Result<TabularMdp> {
    if n_states == 0 || n_actions == 0 {
        return Err(Error::Invalid("random MDP needs states and actions".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        let row: Vec<f64> = (0..n_states).map(|_| rng.gen::<f64>().powi(3)).collect();
        let z: f64 = row.iter().sum();
        p.extend(row.iter().map(|v| v / z));
    }
    // exact renormalization of each row
    for row in p.chunks_mut(n_states) {
        let z: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= z);
    }
    let mu: Vec<f64> = (0..n_states).map(|_| rng.gen::<f64>() + 0.05).collect();
    let z: f64 = mu.iter().sum();
    let reward = (0..n_states * n_actions).map(|_| rng.gen::<f64>()).collect();
    let embed = (0..n_states).map(|_| vec![rng.gen(), rng.gen()]).collect();
    TabularMdp::new(n_states, n_actions, p, mu.iter().map(|v| v / z).collect(), gamma, Some(reward), embed, one_hot(n_actions))
}
