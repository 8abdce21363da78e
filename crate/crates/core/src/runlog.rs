//! Per-iteration training metrics: a CSV body plus a JSON metadata header.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: usize,
    /// Reward-side objective: the regularized OT dual for WAIL, the
    /// discriminator objective for GAIL, the log-likelihood for BC.
    pub objective: f64,
    pub policy_surrogate: f64,
    pub kl_step: f64,
    pub entropy: f64,
    pub scaled_perf_eval: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub metadata: serde_json::Value,
    pub rows: Vec<LogRow>,
}

impl RunLog {
    pub fn new(metadata: serde_json::Value) -> Self {
        Self { metadata, rows: Vec::new() }
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.objective).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        if self.rows.is_empty() {
            wtr.write_record(["iteration", "objective", "policy_surrogate", "kl_step", "entropy", "scaled_perf_eval"])?;
        }
        for row in &self.rows {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Vec<LogRow>> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut rows = Vec::new();
        for row in rdr.deserialize() {
            rows.push(row?);
        }
        Ok(rows)
    }

    /// Writes `metrics.csv` and `run.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.write_csv(fs::File::create(dir.join("metrics.csv"))?)?;
        fs::write(dir.join("run.json"), serde_json::to_string_pretty(&self.metadata)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let metadata = serde_json::from_str(&fs::read_to_string(dir.join("run.json"))?)?;
        let rows = Self::read_csv(fs::File::open(dir.join("metrics.csv"))?)?;
        Ok(Self { metadata, rows })
    }
}
