//! Command-line front end over the `wail_core` harness.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use wail_core::harness::config::{Algorithm, RunConfig};
use wail_core::harness::eval::evaluate;
use wail_core::harness::grid::{demonstrations, prepare, run_cell, run_experiment_grid, LearnedReward};
use wail_core::harness::surface::{expert_plane, reward_surface};
use wail_core::mdp::{read_trajectories, write_trajectories, SoftmaxPolicy};
use wail_core::Error;

#[derive(Parser)]
#[command(name = "wail", version, about = "Wasserstein adversarial imitation learning on tabular MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dataset_size: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Override any config field by dotted path, e.g. `--set wail.lambda=0.1`.
    #[arg(long = "set", value_name = "PATH=JSON")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the expert, sample demonstrations and compute evaluation references.
    MakeExpert(Common),
    /// Train one algorithm and evaluate it.
    Train {
        #[arg(long, default_value = "wail")]
        algo: String,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a saved policy.
    Eval {
        #[arg(long)]
        policy: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Export the reward surface of a saved reward over the expert PCA plane.
    Surface {
        #[arg(long)]
        reward: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the algorithm x dataset-size x seed grid.
    Grid(Common),
}

enum Failure {
    Validation(String),
    Divergence(String),
    PartialGrid(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Divergence { .. } | Error::NotConverged { .. } | Error::Degenerate(_) | Error::Singular(_) => {
                Failure::Divergence(e.to_string())
            }
            other => Failure::Validation(other.to_string()),
        }
    }
}

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), Failure> {
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, key) in parts.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| Failure::Validation(format!("`{path}` is not an object path")))?;
        if i + 1 == parts.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

fn load_config(common: &Common, algo: Option<Algorithm>) -> Result<RunConfig, Failure> {
    let mut value = match &common.config {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p).map_err(|e| Failure::Validation(format!("{}: {e}", p.display())))?)
            .map_err(|e| Failure::Validation(format!("{}: {e}", p.display())))?,
        None => Value::Object(Default::default()),
    };
    for s in &common.sets {
        let (path, raw) = s.split_once('=').ok_or_else(|| Failure::Validation(format!("--set expects PATH=JSON, got `{s}`")))?;
        let v = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(&mut value, path, v)?;
    }
    if let Some(seed) = common.seed {
        set_path(&mut value, "seeds", serde_json::json!([seed]))?;
    }
    if let Some(out) = &common.out {
        set_path(&mut value, "out", serde_json::json!(out))?;
    }
    if let Some(n) = common.dataset_size {
        set_path(&mut value, "dataset_size", serde_json::json!(n))?;
    }
    if let Some(n) = common.iterations {
        set_path(&mut value, "wail.iterations", serde_json::json!(n))?;
        set_path(&mut value, "gail.iterations", serde_json::json!(n))?;
    }
    if let Some(a) = algo {
        set_path(&mut value, "algorithm", serde_json::to_value(a).unwrap())?;
    }
    Ok(RunConfig::from_json(&value.to_string())?)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Validation(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn io(e: std::io::Error) -> Failure {
    Failure::Validation(e.to_string())
}

fn first_seed(cfg: &RunConfig) -> u64 {
    cfg.seeds.first().copied().unwrap_or(0)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::MakeExpert(common) => {
            let cfg = load_config(&common, None)?;
            let prep = prepare(&cfg)?;
            let seed = first_seed(&cfg);
            let demos = demonstrations(&prep, &cfg, cfg.dataset_size, seed)?;
            std::fs::create_dir_all(&cfg.out).map_err(io)?;
            std::fs::write(cfg.out.join("mdp.json"), prep.mdp.to_json()?).map_err(io)?;
            write_json(&cfg.out.join("expert_policy.json"), &prep.expert)?;
            write_json(&cfg.out.join("references.json"), &prep.references)?;
            write_trajectories(std::fs::File::create(cfg.out.join("demos.jsonl")).map_err(io)?, &demos)?;
            println!("{} demonstrations, expert_ref {:.4}, random_ref {:.4}", demos.len(), prep.references.expert_ref, prep.references.random_ref);
        }
        Command::Train { algo, common } => {
            let algo: Algorithm = algo.parse()?;
            let cfg = load_config(&common, Some(algo))?;
            let prep = prepare(&cfg)?;
            let seed = first_seed(&cfg);
            let demos_path = cfg.out.join("demos.jsonl");
            let demos = if demos_path.exists() {
                read_trajectories(std::io::BufReader::new(std::fs::File::open(&demos_path).map_err(io)?), Some(&prep.mdp))?
            } else {
                demonstrations(&prep, &cfg, cfg.dataset_size, seed)?
            };
            let outcome = run_cell(&prep, &cfg, algo, &demos, seed)?;
            let mut log = outcome.log.clone();
            log.metadata["eval"] = serde_json::to_value(outcome.eval).unwrap();
            log.metadata["seed"] = seed.into();
            log.save(&cfg.out)?;
            write_json(&cfg.out.join("policy.json"), &outcome.policy)?;
            if let Some(r) = &outcome.reward {
                write_json(&cfg.out.join("reward.json"), r)?;
            }
            write_json(&cfg.out.join("eval.json"), &outcome.eval)?;
            println!("{} scaled {:.4} mean {:.4} std {:.4}", algo.name(), outcome.eval.scaled, outcome.eval.mean, outcome.eval.std);
            if let Some(d) = outcome.divergence {
                return Err(Failure::Divergence(d));
            }
        }
        Command::Eval { policy, common } => {
            let cfg = load_config(&common, None)?;
            let prep = prepare(&cfg)?;
            let text = std::fs::read_to_string(&policy).map_err(io)?;
            let raw: SoftmaxPolicy = serde_json::from_str(&text).map_err(|e| Failure::Validation(e.to_string()))?;
            let pi = SoftmaxPolicy::from_logits(raw.n_states(), raw.n_actions(), raw.logits().to_vec())?;
            let result = evaluate(&prep.mdp, &pi, cfg.eval.n_eval, common.seed.unwrap_or(cfg.eval.seed), &prep.references)?;
            std::fs::create_dir_all(&cfg.out).map_err(io)?;
            write_json(&cfg.out.join("eval.json"), &result)?;
            println!("scaled {:.4} mean {:.4} std {:.4}", result.scaled, result.mean, result.std);
        }
        Command::Surface { reward, common } => {
            let cfg = load_config(&common, None)?;
            let prep = prepare(&cfg)?;
            let text = std::fs::read_to_string(&reward).map_err(io)?;
            let reward: LearnedReward = serde_json::from_str(&text).map_err(|e| Failure::Validation(e.to_string()))?;
            let demos = demonstrations(&prep, &cfg, cfg.dataset_size, first_seed(&cfg))?;
            let (pca, bounds) = expert_plane(&prep.mdp, &demos, cfg.surface.margin)?;
            let surface = reward_surface(&prep.mdp, |p| reward.score(p), &pca, cfg.surface.grid_n, &bounds)?;
            std::fs::create_dir_all(&cfg.out).map_err(io)?;
            surface.save(&cfg.out.join("surface.csv"))?;
            write_json(&cfg.out.join("surface.json"), &serde_json::json!({ "pca": pca, "bounds": bounds, "constant": surface.constant }))?;
            println!("{}x{} surface written{}", surface.grid_n, surface.grid_n, if surface.constant { " (constant)" } else { "" });
        }
        Command::Grid(common) => {
            let cfg = load_config(&common, None)?;
            let report = run_experiment_grid(&cfg, Some(&cfg.out))?;
            for row in &report.rows {
                println!("{:<4} n={:<3} seed={:<3} scaled {:.4}", row.algorithm.name(), row.dataset_size, row.seed, row.scaled);
            }
            for f in &report.failures {
                eprintln!("failed {} n={} seed={}: {}", f.algorithm.name(), f.dataset_size, f.seed, f.error);
            }
            if !report.failures.is_empty() {
                return Err(Failure::PartialGrid(report.failures.len()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Divergence(msg)) => {
            eprintln!("diverged: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::PartialGrid(n)) => {
            eprintln!("{n} grid cell(s) failed");
            ExitCode::from(3)
        }
    }
}
