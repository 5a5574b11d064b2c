//! Config-driven runner around `mmqubit-core`: parse a TOML run
//! description, execute the experiment, persist a record, emit plot data.

pub mod config;
pub mod record;
pub mod registry;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::RunConfig;
pub use record::RunRecord;

/// Environment variable naming the directory that run outputs go under.
pub const OUTPUT_ROOT_VAR: &str = "MMQ_OUTPUT_ROOT";
const DEFAULT_OUTPUT_ROOT: &str = "runs";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
}

pub struct RunArtifacts {
    pub record: RunRecord,
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

/// Executes `cfg`, writes record.json, timing.json and the configured plot files under `root`.
pub fn run(cfg: &RunConfig, root: &Path) -> Result<RunArtifacts, CliError> {
    let started = Instant::now();
    let output = registry::execute(cfg)?;
    let record = RunRecord::new(cfg, &output);
    let dir = root.join(cfg.output.directory.as_deref().unwrap_or(&cfg.experiment.id));
    let mut files = vec![record.save(&dir)?];
    for format in &cfg.output.formats {
        files.extend(record::emit(&record, *format, &dir)?);
    }
    record::save_timing(&dir, &record.config_hash, started.elapsed())?;
    Ok(RunArtifacts { record, dir, files })
}
