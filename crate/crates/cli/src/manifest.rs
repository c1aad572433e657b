//! Run manifests: every experiment directory gets a `manifest.json`
//! recording what produced it, what it consumed, and the content hash of
//! every artifact it wrote.
//!
//! Apart from `wall_clock_sec`, two runs of the same command with the same
//! configuration and seed produce identical manifests; the artifact hashes
//! are the determinism contract.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// A file the run read or wrote, identified by its path relative to the
/// output root and the SHA-256 of its bytes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

/// Summary of one completed stage, written alongside its artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    /// Subcommand that produced this directory.
    pub command: String,
    /// Crate version of the driver.
    pub version: String,
    /// Master seed in effect.
    pub seed: u64,
    /// SHA-256 of the resolved configuration serialized as TOML.
    pub config_sha256: String,
    /// Artifacts read from earlier stages.
    pub inputs: Vec<FileRecord>,
    /// Artifacts written by this stage.
    pub artifacts: Vec<FileRecord>,
    /// Elapsed wall-clock time. The one field that varies run to run.
    pub wall_clock_sec: f64,
    /// Ensemble members that failed and were excluded, if applicable.
    pub member_failures: usize,
    /// `ok`, or `partial` when failures were tolerated but nonzero.
    pub status: String,
}

/// Accumulates inputs/artifacts while a stage runs, then writes the
/// manifest next to the artifacts.
pub struct ManifestBuilder {
    command: String,
    seed: u64,
    config_sha256: String,
    root: PathBuf,
    inputs: Vec<FileRecord>,
    artifacts: Vec<FileRecord>,
    member_failures: usize,
    started: Instant,
}

impl ManifestBuilder {
    /// `root` is the output root all recorded paths are made relative to.
    pub fn new(command: &str, seed: u64, config_sha256: &str, root: &Path) -> Self {
        Self {
            command: command.to_string(),
            seed,
            config_sha256: config_sha256.to_string(),
            root: root.to_path_buf(),
            inputs: Vec::new(),
            artifacts: Vec::new(),
            member_failures: 0,
            started: Instant::now(),
        }
    }

    fn relative(&self, path: &Path) -> String {
        path.strip_prefix(&self.root)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }

    /// Record a file read from an earlier stage (deduplicated by path).
    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        let rel = self.relative(path);
        if self.inputs.iter().any(|r| r.path == rel) {
            return Ok(());
        }
        let sha256 = l96ens::io::sha256_file(path)
            .map_err(|e| CliError::Config(format!("hashing input {}: {e}", path.display())))?;
        self.inputs.push(FileRecord { path: rel, sha256 });
        Ok(())
    }

    /// Record a file this stage wrote (deduplicated by path; re-hashing
    /// keeps the latest content).
    pub fn artifact(&mut self, path: &Path) -> CliResult<()> {
        let rel = self.relative(path);
        let sha256 = l96ens::io::sha256_file(path)
            .map_err(|e| CliError::Config(format!("hashing artifact {}: {e}", path.display())))?;
        if let Some(existing) = self.artifacts.iter_mut().find(|r| r.path == rel) {
            existing.sha256 = sha256;
        } else {
            self.artifacts.push(FileRecord { path: rel, sha256 });
        }
        Ok(())
    }

    pub fn add_failures(&mut self, n: usize) {
        self.member_failures += n;
    }

    pub fn member_failures(&self) -> usize {
        self.member_failures
    }

    /// Finalize and write `manifest.json` into `dir`.
    pub fn write(self, dir: &Path) -> CliResult<RunManifest> {
        let status = if self.member_failures > 0 { "partial" } else { "ok" };
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            config_sha256: self.config_sha256,
            inputs: self.inputs,
            artifacts: self.artifacts,
            wall_clock_sec: self.started.elapsed().as_secs_f64(),
            member_failures: self.member_failures,
            status: status.to_string(),
        };
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Config(format!("manifest serialization: {e}")))?;
        std::fs::write(&path, text)
            .map_err(|e| CliError::Config(format!("writing {}: {e}", path.display())))?;
        Ok(manifest)
    }
}

/// Top-level manifest for `suite`, listing the per-stage manifests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    /// Relative path and hash of each completed stage's manifest.
    pub stages: Vec<FileRecord>,
    /// Stages that aborted, with their error text (empty on success).
    pub failed_stages: Vec<(String, String)>,
    pub wall_clock_sec: f64,
    pub status: String,
}

impl SuiteManifest {
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Config(format!("manifest serialization: {e}")))?;
        std::fs::write(&path, text)
            .map_err(|e| CliError::Config(format!("writing {}: {e}", path.display())))?;
        Ok(())
    }
}
