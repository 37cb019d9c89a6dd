//! Configuration, execution and serialization for the `hlab` command.

pub mod config;
pub mod gridmap;
pub mod run;

use std::path::{Path, PathBuf};

use serde_json::json;

pub use config::{parse_config, ExperimentConfig};
pub use run::{run, Artifacts};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 2,
            Self::NonConvergence(_) => 3,
            Self::Io(_) => 4,
        }
    }
}

impl From<hlab_core::Error> for CliError {
    fn from(e: hlab_core::Error) -> Self {
        match e {
            hlab_core::Error::NonConvergence { .. } => Self::NonConvergence(e.to_string()),
            other => Self::Validation(other.to_string()),
        }
    }
}

/// Writes `<command>-<timestamp>-<seed>[-suffix].csv` and the JSON summary
/// into `dir`; returns the paths written.
pub fn write_artifacts(cfg: &ExperimentConfig, art: &Artifacts, dir: &Path, timestamp: &str) -> Result<Vec<PathBuf>, CliError> {
    let io = |p: &Path, e: std::io::Error| CliError::Io(format!("{}: {e}", p.display()));
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let stem = format!("{}-{timestamp}-{}", cfg.command.name(), cfg.numerics.seed);
    let mut written = Vec::new();
    for t in &art.tables {
        let name = match &t.suffix {
            Some(s) => format!("{stem}-{s}.csv"),
            None => format!("{stem}.csv"),
        };
        let path = dir.join(name);
        std::fs::write(&path, &t.body).map_err(|e| io(&path, e))?;
        written.push(path);
    }
    let summary = json!({
        "config": cfg,
        "results": art.results,
        "meta": {
            "name": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "timestamp": timestamp,
        },
    });
    let path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&summary).expect("serializable summary");
    std::fs::write(&path, text + "\n").map_err(|e| io(&path, e))?;
    written.push(path);
    Ok(written)
}
