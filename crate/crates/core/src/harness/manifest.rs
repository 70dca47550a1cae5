//! Run manifests: everything needed to repeat a run on the same build.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Controller families the harness can train or evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Multi-agent learner with the shared encoder.
    Proposed,
    /// One centralized agent commanding every ESS.
    Ddpg,
    RuleBased,
    /// Perfect-foresight schedule, recomputed per day.
    DpOracle,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Proposed, Method::Ddpg, Method::RuleBased, Method::DpOracle];

    pub fn label(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Ddpg => "ddpg",
            Method::RuleBased => "rule_based",
            Method::DpOracle => "dp_oracle",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, Method::Proposed | Method::Ddpg)
    }

    /// Checkpoint tag prefix of a learned method.
    pub fn learner_name(self) -> Option<&'static str> {
        match self {
            Method::Proposed => Some("maddpg"),
            Method::Ddpg => Some("ddpg"),
            _ => None,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "proposed" | "maddpg" => Ok(Method::Proposed),
            "ddpg" => Ok(Method::Ddpg),
            "rule_based" | "rule" => Ok(Method::RuleBased),
            "dp_oracle" | "dp" => Ok(Method::DpOracle),
            other => Err(Error::InvalidInput(format!(
                "unknown method `{other}` (expected proposed, ddpg, rule_based or dp_oracle)"
            ))),
        }
    }
}

/// What an evaluation runs: a saved checkpoint or an untrained baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    Checkpoint { path: PathBuf },
    Baseline { method: Method },
}

/// The command a manifest records, replayable by [`super::run`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Invocation {
    Train { method: Method },
    Eval { policy: PolicySpec },
    Compare { methods: Vec<Method>, seeds: Vec<u64>, lambda_sweep: bool },
    Audit { policy: PolicySpec },
    SynthData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    /// Training seed (`run.seed`).
    pub run: u64,
    pub eval_scenarios: u64,
    pub data: u64,
    pub split: u64,
}

impl Seeds {
    pub fn of(cfg: &RunConfig) -> Self {
        Self {
            run: cfg.run.seed,
            eval_scenarios: cfg.eval.scenario_seed,
            data: cfg.data.synth_seed,
            split: cfg.data.split_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub invocation: Invocation,
    /// Fully resolved, after command-line overrides.
    pub config: RunConfig,
    pub seeds: Seeds,
    pub code_version: String,
    pub dataset_checksum: String,
    /// RFC 3339, UTC.
    pub started_at: String,
    pub wall_clock_s: f64,
    pub outcome: serde_json::Value,
}

impl RunManifest {
    pub fn code_version() -> String {
        format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(format!("manifest: {e}")))?;
        std::fs::write(&path, text + "\n")?;
        Ok(path)
    }

    /// Accepts either the manifest file or the directory holding it.
    pub fn read(path: &Path) -> Result<Self> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let text = std::fs::read_to_string(&file)?;
        let m: RunManifest =
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", file.display())))?;
        m.config.validate()?;
        Ok(m)
    }
}
