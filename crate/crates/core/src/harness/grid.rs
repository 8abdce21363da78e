//! Single experiment cells and the (algorithm x dataset size x seed) grid.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{gail_surrogate_reward, train_bc, train_gail, Discriminator};
use crate::env::build_environment;
use crate::error::{Error, Result};
use crate::harness::config::{Algorithm, RunConfig};
use crate::harness::eval::{compute_references, evaluate, EvalReferences, EvalResult};
use crate::harness::expert::make_expert;
use crate::mdp::{soft_value_iteration, SoftmaxPolicy, TabularMdp, Trajectory};
use crate::reward::{mdp_points, PotentialModel, SupportPoint};
use crate::runlog::RunLog;
use crate::wail::{train_wail, ExpertData};

/// Environment, expert and references shared by every cell of a config.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub mdp: TabularMdp,
    pub expert: SoftmaxPolicy,
    pub references: EvalReferences,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    let mdp = build_environment(&cfg.env)?;
    let reward = mdp.true_reward().ok_or_else(|| Error::Invalid("expert needs a true reward".into()))?;
    let expert = soft_value_iteration(&mdp, reward, cfg.expert.lambda, 1e-10)?;
    let references = compute_references(&mdp, &expert, cfg.eval.seed)?;
    Ok(Prepared { mdp, expert, references })
}

/// Demonstrations for one run seed.
pub fn demonstrations(prep: &Prepared, cfg: &RunConfig, dataset_size: usize, seed: u64) -> Result<Vec<Trajectory>> {
    let (_, demos) = make_expert(
        &prep.mdp,
        cfg.expert.lambda,
        dataset_size,
        cfg.expert.traj_len,
        cfg.expert.seed.wrapping_add(seed),
    )?;
    Ok(demos)
}

/// Learned reward of a cell, when the algorithm has one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum LearnedReward {
    Potential(PotentialModel),
    Discriminator(Discriminator),
}

impl LearnedReward {
    /// The potential itself, or the GAIL surrogate `-log D`.
    pub fn score(&self, point: &SupportPoint) -> Result<f64> {
        match self {
            LearnedReward::Potential(m) => m.apply(point),
            LearnedReward::Discriminator(d) => gail_surrogate_reward(d, point),
        }
    }

    pub fn table(&self, mdp: &TabularMdp) -> Result<Vec<f64>> {
        mdp_points(mdp).iter().map(|p| self.score(p)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub policy: SoftmaxPolicy,
    pub reward: Option<LearnedReward>,
    pub log: RunLog,
    pub eval: EvalResult,
    pub divergence: Option<String>,
}

/// Trains one algorithm on `demos` with run seed `seed` and evaluates it.
pub fn run_cell(
    prep: &Prepared,
    cfg: &RunConfig,
    algorithm: Algorithm,
    demos: &[Trajectory],
    seed: u64,
) -> Result<CellOutcome> {
    let mdp = &prep.mdp;
    let expert = ExpertData::Trajectories(demos.to_vec());
    let (policy, reward, log, divergence) = match algorithm {
        Algorithm::Wail => {
            let mut c = cfg.wail.clone();
            c.seed = seed;
            c.reward_model.seed = seed;
            let out = train_wail(mdp, &expert, &c)?;
            (out.policy, Some(LearnedReward::Potential(out.reward)), out.log, out.divergence)
        }
        Algorithm::Gail => {
            let mut c = cfg.gail.clone();
            c.seed = seed;
            c.disc_model.seed = seed;
            let out = train_gail(mdp, &expert, &c)?;
            (out.policy, Some(LearnedReward::Discriminator(out.disc)), out.log, out.divergence)
        }
        Algorithm::Bc => {
            let policy = train_bc(mdp.n_states(), mdp.n_actions(), demos, &cfg.bc)?;
            let log = RunLog::new(serde_json::json!({ "algorithm": "bc", "config": cfg.bc }));
            (policy, None, log, None)
        }
    };
    let eval = evaluate(mdp, &policy, cfg.eval.n_eval, cfg.eval.seed, &prep.references)?;
    Ok(CellOutcome { policy, reward, log, eval, divergence })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridCell {
    pub algorithm: Algorithm,
    pub dataset_size: usize,
    pub seed: u64,
}

impl GridCell {
    pub fn dir_name(&self) -> String {
        format!("{}_n{}_s{}", self.algorithm.name(), self.dataset_size, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: Algorithm,
    pub dataset_size: usize,
    pub seed: u64,
    pub mean: f64,
    pub std: f64,
    pub scaled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub algorithm: Algorithm,
    pub dataset_size: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridReport {
    pub rows: Vec<SummaryRow>,
    pub failures: Vec<CellFailure>,
}

pub fn grid_cells(cfg: &RunConfig) -> Vec<GridCell> {
    let mut cells = Vec::new();
    for &algorithm in &cfg.grid.algorithms {
        for &dataset_size in &cfg.grid.dataset_sizes {
            for &seed in &cfg.seeds {
                cells.push(GridCell { algorithm, dataset_size, seed });
            }
        }
    }
    cells
}

fn run_grid_cell(prep: &Prepared, cfg: &RunConfig, cell: GridCell, out: Option<&Path>) -> Result<SummaryRow> {
    let demos = demonstrations(prep, cfg, cell.dataset_size, cell.seed)?;
    let outcome = run_cell(prep, cfg, cell.algorithm, &demos, cell.seed)?;
    if let Some(dir) = out {
        let mut log = outcome.log.clone();
        log.metadata["eval"] = serde_json::to_value(outcome.eval)?;
        log.save(&dir.join(cell.dir_name()))?;
    }
    if let Some(what) = outcome.divergence {
        return Err(Error::Divergence { step: 0, what });
    }
    Ok(SummaryRow {
        algorithm: cell.algorithm,
        dataset_size: cell.dataset_size,
        seed: cell.seed,
        mean: outcome.eval.mean,
        std: outcome.eval.std,
        scaled: outcome.eval.scaled,
    })
}

/// Runs every cell in parallel. A failing cell is recorded and the rest
/// continue. With `out`, each cell writes its own subdirectory and the
/// summary goes to `summary.csv` (failures to `failures.csv`).
pub fn run_experiment_grid(cfg: &RunConfig, out: Option<&Path>) -> Result<GridReport> {
    let cells = grid_cells(cfg);
    let mut report = GridReport::default();
    if !cells.is_empty() {
        let prep = prepare(cfg)?;
        let results: Vec<(GridCell, Result<SummaryRow>)> =
            cells.par_iter().map(|&cell| (cell, run_grid_cell(&prep, cfg, cell, out))).collect();
        for (cell, res) in results {
            match res {
                Ok(row) => report.rows.push(row),
                Err(e) => report.failures.push(CellFailure {
                    algorithm: cell.algorithm,
                    dataset_size: cell.dataset_size,
                    seed: cell.seed,
                    error: e.to_string(),
                }),
            }
        }
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_summary(&report.rows, std::fs::File::create(dir.join("summary.csv"))?)?;
        if !report.failures.is_empty() {
            let mut w = csv::Writer::from_path(dir.join("failures.csv"))?;
            for f in &report.failures {
                w.serialize(f)?;
            }
            w.flush()?;
        }
    }
    Ok(report)
}

pub fn write_summary<W: std::io::Write>(rows: &[SummaryRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    if rows.is_empty() {
        wtr.write_record(["algorithm", "dataset_size", "seed", "mean", "std", "scaled"])?;
    }
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_summary<R: std::io::Read>(r: R) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for row in rdr.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

/// Default output location for a config's grid.
pub fn grid_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out.join("grid")
}
