//! Run manifest: resolved config, versions, timestamps and checksummed output inventory.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use sch_core::experiment::ExperimentConfig;
use sch_core::noise::GENERATOR_ID;

use crate::config::ConfigFile;
use crate::CliError;

pub const MANIFEST_SCHEMA: &str = "run-manifest/v1";

#[derive(Debug, Serialize)]
pub struct OutputFile {
    /// File name relative to the output directory.
    pub path: String,
    pub schema: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub schema: &'static str,
    pub tool: String,
    pub generator: &'static str,
    pub config: ConfigFile,
    pub config_hash: String,
    pub jobs: usize,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub warnings: Vec<String>,
    pub outputs: Vec<OutputFile>,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn io_error(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl Manifest {
    pub fn start(config: &ExperimentConfig, jobs: usize) -> Result<Self, CliError> {
        Ok(Manifest {
            schema: MANIFEST_SCHEMA,
            tool: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
            generator: GENERATOR_ID,
            config: ConfigFile::from_resolved(config),
            config_hash: config.hash()?,
            jobs,
            started_unix: unix_now(),
            finished_unix: 0,
            warnings: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn add(&mut self, path: &Path, schema: &str) -> Result<(), CliError> {
        let bytes = std::fs::read(path).map_err(|e| io_error(path, e))?;
        self.outputs.push(OutputFile {
            path: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            schema: schema.to_string(),
            sha256: format!("{:x}", Sha256::digest(&bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn finish(mut self, path: &Path) -> Result<(), CliError> {
        self.finished_unix = unix_now();
        let text = serde_json::to_string_pretty(&self).map_err(|e| CliError::Config(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| io_error(path, e))
    }
}
