use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{CliError, Global};

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Provenance block embedded in every report.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub seed: u64,
    pub paper_scale: bool,
    pub threads: usize,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub duration_seconds: f64,
}

pub struct Run {
    command: String,
    global: Global,
    started: Instant,
    inputs: Vec<InputDigest>,
}

impl Run {
    pub fn start(command: &str, global: &Global) -> Self {
        Self {
            command: command.into(),
            global: global.clone(),
            started: Instant::now(),
            inputs: Vec::new(),
        }
    }

    /// Records the SHA-256 of an input file.
    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path).map_err(|e| harmonize_core::Error::io(path, e))?;
        self.inputs.push(InputDigest {
            path: path.to_path_buf(),
            sha256: format!("{:x}", Sha256::digest(&bytes)),
        });
        Ok(())
    }

    pub fn finish(self, config: impl Serialize) -> Result<Manifest, CliError> {
        Ok(Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.global.seed,
            paper_scale: self.global.paper_scale,
            threads: rayon::current_num_threads(),
            config: serde_json::to_value(config).map_err(|e| CliError::Internal(e.to_string()))?,
            inputs: self.inputs,
            duration_seconds: self.started.elapsed().as_secs_f64(),
        })
    }
}

pub fn output_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Internal(format!("writing {}: {e}", path.display()))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| output_error(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| output_error(path, e))
}

/// `{"manifest": …, "result": …}` written to `path`.
pub fn write_report(path: &Path, manifest: &Manifest, result: &impl Serialize) -> Result<(), CliError> {
    write_json(path, &serde_json::json!({ "manifest": manifest, "result": result }))
}

/// One-line manifest on stdout for commands whose outputs are data files.
pub fn announce(manifest: &Manifest) -> Result<(), CliError> {
    let line = serde_json::to_string(manifest).map_err(|e| CliError::Internal(e.to_string()))?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").map_err(|e| CliError::Internal(e.to_string()))
}
