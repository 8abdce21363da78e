//! Full experiment configuration, loaded from JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{BcConfig, GailConfig};
use crate::env::{build_environment, EnvSpec};
use crate::error::{Error, Result};
use crate::harness::expert::DEFAULT_TRAJ_LEN;
use crate::harness::surface::DEFAULT_MARGIN;
use crate::wail::WailConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Wail,
    Gail,
    Bc,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Wail => "wail",
            Algorithm::Gail => "gail",
            Algorithm::Bc => "bc",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wail" => Ok(Algorithm::Wail),
            "gail" => Ok(Algorithm::Gail),
            "bc" => Ok(Algorithm::Bc),
            other => Err(Error::Invalid(format!("unknown algorithm `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpertConfig {
    /// Soft value iteration temperature.
    pub lambda: f64,
    pub traj_len: usize,
    /// Demonstrations for run seed `k` are drawn with `seed + k`.
    pub seed: u64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self { lambda: 0.01, traj_len: DEFAULT_TRAJ_LEN, seed: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub n_eval: usize,
    /// Shared by every policy so that comparisons use common rollout noise.
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { n_eval: 500, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurfaceConfig {
    pub grid_n: usize,
    pub margin: f64,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self { grid_n: 25, margin: DEFAULT_MARGIN }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridMatrix {
    pub algorithms: Vec<Algorithm>,
    pub dataset_sizes: Vec<usize>,
}

impl Default for GridMatrix {
    fn default() -> Self {
        Self { algorithms: vec![Algorithm::Wail, Algorithm::Gail, Algorithm::Bc], dataset_sizes: vec![1, 4, 10, 25] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub env: EnvSpec,
    pub algorithm: Algorithm,
    /// Number of expert trajectories.
    pub dataset_size: usize,
    pub seeds: Vec<u64>,
    pub expert: ExpertConfig,
    pub eval: EvalConfig,
    pub wail: WailConfig,
    pub gail: GailConfig,
    pub bc: BcConfig,
    pub surface: SurfaceConfig,
    pub grid: GridMatrix,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvSpec::gridworld(5, 5),
            algorithm: Algorithm::Wail,
            dataset_size: 1,
            seeds: vec![0],
            expert: ExpertConfig::default(),
            eval: EvalConfig::default(),
            wail: WailConfig::default(),
            gail: GailConfig::default(),
            bc: BcConfig::default(),
            surface: SurfaceConfig::default(),
            grid: GridMatrix::default(),
            out: PathBuf::from("runs"),
        }
    }
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks every section against its owning module.
    pub fn validate(&self) -> Result<()> {
        let mdp = build_environment(&self.env)?;
        if mdp.true_reward().is_none() {
            return Err(Error::Invalid("environment has no true reward".into()));
        }
        if self.dataset_size == 0 {
            return Err(Error::Invalid("dataset_size must be positive".into()));
        }
        if !(self.expert.lambda > 0.0) || self.expert.traj_len == 0 {
            return Err(Error::Invalid("expert needs lambda > 0 and traj_len >= 1".into()));
        }
        if self.eval.n_eval == 0 {
            return Err(Error::Invalid("eval.n_eval must be positive".into()));
        }
        if self.surface.grid_n == 0 || !(self.surface.margin >= 0.0) {
            return Err(Error::Invalid("surface needs grid_n >= 1 and margin >= 0".into()));
        }
        if self.grid.dataset_sizes.contains(&0) {
            return Err(Error::Invalid("grid dataset sizes must be positive".into()));
        }
        if !(self.bc.lr > 0.0) {
            return Err(Error::Invalid("bc.lr must be positive".into()));
        }
        self.wail.validate()?;
        self.gail.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(RunConfig::from_json(&cfg.to_json().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg = RunConfig::from_json(r#"{"algorithm": "gail", "dataset_size": 4, "wail": {"lambda": 0.1}}"#).unwrap();
        assert_eq!(cfg.algorithm, Algorithm::Gail);
        assert_eq!(cfg.wail.lambda, 0.1);
        assert_eq!(cfg.wail.iterations, WailConfig::default().iterations);
    }

    #[test]
    fn invalid_fields_are_rejected() {
        assert!(RunConfig::from_json(r#"{"dataset_size": 0}"#).is_err());
        assert!(RunConfig::from_json(r#"{"algorithm": "ppo"}"#).is_err());
        assert!(RunConfig::from_json(r#"{"wail": {"reg": {"kind": "l2", "epsilon": -1}}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"env": {"name": "gridworld", "width": 0, "height": 3}}"#).is_err());
    }
}
