//! `run.json`: everything needed to re-run a command bitwise.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::verify::VerifyTarget;

pub const MANIFEST_NAME: &str = "run.json";

/// A fully resolved command: the replayable unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    Verify { target: VerifyTarget },
    Train,
    Evaluate { checkpoints: Vec<PathBuf>, baseline: Option<PathBuf>, reference: Option<PathBuf> },
    Continual { checkpoint: PathBuf },
    DumpTree { set_seed: u64, index: usize, depth: usize },
    DumpModel,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Verify { .. } => "verify",
            Command::Train => "train",
            Command::Evaluate { .. } => "evaluate",
            Command::Continual { .. } => "continual",
            Command::DumpTree { .. } => "dump-tree",
            Command::DumpModel => "dump-model",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: Command,
    pub config: RunConfig,
    /// Root seed of every random stream in the run.
    pub seed: u64,
    pub workers: usize,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    /// Files written by the run, relative to the run directory.
    pub outputs: Vec<String>,
    pub pass: bool,
    pub exit_code: i32,
    pub results: serde_json::Value,
}

impl RunManifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

pub fn now_unix_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}
