//! Run configuration, experiment orchestration and reports.
//!
//! Every command writes its outputs plus a `manifest.json` into one output
//! directory. Training runs one sub-directory per seed (`seed_<n>/`) holding
//! `metrics.csv`, `actor.json`, `value.json`, `properties.json` and
//! `summary.json`; the aggregate `report.json` / `report.csv` is recomputed
//! from those files alone.

mod plot;
mod run;
mod stats;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algos::{AgentKind, DqnConfig, LagrangianConfig, PenaltyMode, PpoConfig, TrainConfig};
use crate::env::Task;
use crate::verify::{DEFAULT_GAP, DEFAULT_MAX_BOXES};
use crate::{Error, Result};

pub use plot::{svg_line_chart, Series};
pub use run::{
    aggregate_dir, env_demo, run_compare, run_eval, run_train, run_verify, CompareArgs, CompareSummaryRow, DemoPolicy,
    EvalArgs, EvalRow, SeedOutcome, VerifyArgs, VerifyRow,
};
pub use stats::{mean_std, Aggregate, Report};

/// Configuration of a multi-seed experiment. Loaded from TOML; CLI flags
/// override individual fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub agent: AgentKind,
    pub penalty: PenaltyMode,
    pub seeds: Vec<u64>,
    pub total_steps: usize,
    /// Samples per property during training.
    pub samples: usize,
    pub epsilon: f64,
    pub omega: f64,
    pub online_properties: bool,
    pub log_every: usize,
    /// Verification gap for reports.
    pub gap: f64,
    pub max_boxes: usize,
    pub out_dir: PathBuf,
    pub jobs: usize,
    pub plots: bool,
    pub ppo: PpoConfig,
    pub dqn: DqnConfig,
    pub lagrangian: LagrangianConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            task: t.task,
            agent: t.agent,
            penalty: t.penalty,
            seeds: vec![0],
            total_steps: t.total_steps,
            samples: t.samples,
            epsilon: t.epsilon,
            omega: t.omega,
            online_properties: t.online_properties,
            log_every: t.log_every,
            gap: DEFAULT_GAP,
            max_boxes: DEFAULT_MAX_BOXES,
            out_dir: PathBuf::from("runs"),
            jobs: 1,
            plots: false,
            ppo: t.ppo,
            dqn: t.dqn,
            lagrangian: t.lagrangian,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds given".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        if !(self.gap > 0.0 && self.gap < 1.0) || self.max_boxes == 0 {
            return Err(Error::Config("gap must lie in (0, 1) and max_boxes be positive".into()));
        }
        self.train_config(self.seeds[0]).validate()
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            agent: self.agent,
            task: self.task,
            penalty: self.penalty,
            omega: self.omega,
            total_steps: self.total_steps,
            seed,
            samples: self.samples,
            epsilon: self.epsilon,
            online_properties: self.online_properties,
            log_every: self.log_every,
            ppo: self.ppo,
            dqn: self.dqn,
            lagrangian: self.lagrangian,
            ..TrainConfig::default()
        }
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(self.to_toml()?.as_bytes()))
    }
}

/// `"0..2"` (inclusive), `"3"`, or `"1,4,9"`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("cannot parse seeds '{s}'"));
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Reproduction record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub args: serde_json::Value,
    pub config_sha256: String,
}

impl Manifest {
    pub fn new<T: Serialize>(command: &str, args: &T) -> Result<Self> {
        let args = serde_json::to_value(args)?;
        let config_sha256 = sha256_hex(serde_json::to_string(&args)?.as_bytes());
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            args,
            config_sha256,
        })
    }

    pub fn write(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
