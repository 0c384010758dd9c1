//! Resolved run configuration. Every output echoes it, and `--config` reads
//! it back, so a run can be reproduced from its own output.

use std::path::PathBuf;

use hardy_core::{Error, Result, WeightRule};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    Power { alpha: f64 },
    Table { path: PathBuf },
}

impl WeightSource {
    pub fn load(&self) -> Result<WeightRule> {
        match self {
            WeightSource::Power { alpha } => WeightRule::power(*alpha),
            WeightSource::Table { path } => WeightRule::from_csv_path(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Task {
    CheckWeights { horizon: usize },
    Solve { n: usize, tol: f64 },
    Sweep { n: Vec<usize>, tol: f64 },
    OracleCompare { n_max: usize, tol: f64, oracle_tol: f64 },
    Breakdown { mu: Vec<f64>, cap: usize, c0: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub weights: WeightSource,
    pub p: f64,
    /// No randomness is used anywhere; recorded so the echo is self-describing.
    pub deterministic: bool,
    pub task: Task,
}

impl RunConfig {
    pub fn new(weights: WeightSource, p: f64, task: Task) -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            weights,
            p,
            deterministic: true,
            task,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Parse a config from a bare JSON config, a JSON result carrying a
    /// `config` field, or a CSV whose first line is `# config: {...}`.
    pub fn parse_echo(text: &str) -> Result<Self> {
        let trimmed = text.trim_start();
        let json = if let Some(rest) = trimmed.strip_prefix("# config:") {
            rest.lines().next().unwrap_or("").trim().to_string()
        } else {
            trimmed.to_string()
        };
        let value: serde_json::Value = serde_json::from_str(&json)?;
        let value = match value.get("config") {
            Some(inner) => inner.clone(),
            None => value,
        };
        let cfg: RunConfig = serde_json::from_value(value)?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported config schema version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }
}
