//! Output-tree layout and per-stage seed derivation.
//!
//! Every experiment writes into its own subdirectory of the output root,
//! with a `manifest.json` per stage. Stage seeds derive from the master
//! seed along stable (role, stage-id) paths, so a stage run standalone and
//! the same stage run inside `suite` produce identical streams.

use std::path::{Path, PathBuf};

use l96ens::seed::{derive, Role};

use crate::error::{CliError, CliResult};

/// Stable stage identifiers for seed derivation. Appending new stages is
/// safe; renumbering is a compatibility break.
pub mod stage_id {
    pub const ENV: u64 = 0;
    pub const GEN_DATA: u64 = 1;
    pub const FIT: u64 = 2;
    pub const CLIMATOLOGY: u64 = 3;
    pub const INTERNAL_VARIABILITY: u64 = 4;
    pub const SENSITIVITY: u64 = 5;
    pub const ENSEMBLE: u64 = 6;
    pub const CORRELATIONS: u64 = 7;
}

/// Master seed of one stage's random streams.
pub fn stage_seed(master: u64, id: u64) -> u64 {
    derive(master, Role::Generic, &[id])
}

/// Master seed of an indexed sub-task within a stage (per-checkpoint
/// training streams, per-closure ensembles).
pub fn stage_task_seed(master: u64, id: u64, task: u64) -> u64 {
    derive(master, Role::Generic, &[id, task])
}

/// A second-level sub-task seed (e.g. a variant of a per-closure run).
pub fn stage_subtask_seed(master: u64, id: u64, task: u64, sub: u64) -> u64 {
    derive(master, Role::Generic, &[id, task, sub])
}

/// The output tree. Directories are created on demand.
#[derive(Debug, Clone)]
pub struct OutDirs {
    pub root: PathBuf,
}

impl OutDirs {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn env(&self) -> PathBuf {
        self.root.join("env")
    }

    pub fn climatology(&self) -> PathBuf {
        self.root.join("climatology")
    }

    pub fn internal_variability(&self) -> PathBuf {
        self.root.join("internal-variability")
    }

    pub fn sensitivity(&self) -> PathBuf {
        self.root.join("sensitivity")
    }

    pub fn ensembles(&self) -> PathBuf {
        self.root.join("ensembles")
    }

    pub fn decomposition(&self) -> PathBuf {
        self.root.join("decomposition")
    }

    pub fn skill(&self) -> PathBuf {
        self.root.join("skill")
    }

    pub fn correlations(&self) -> PathBuf {
        self.root.join("correlations")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }

    /// Create `dir` (and parents) if needed and return it.
    pub fn ensure(&self, dir: PathBuf) -> CliResult<PathBuf> {
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::Config(format!("creating {}: {e}", dir.display())))?;
        Ok(dir)
    }

    /// Path to a committed checkpoint file, failing with a clear message
    /// when the fit stage has not produced it yet.
    pub fn checkpoint_file(&self, stem: &str) -> CliResult<PathBuf> {
        let path = self.checkpoints().join(format!("{stem}.json"));
        if !path.exists() {
            return Err(CliError::Config(format!(
                "checkpoint {} not found; run `fit` first",
                path.display()
            )));
        }
        Ok(path)
    }

    /// Path to the dataset CSV, failing when `gen-data` has not run.
    pub fn dataset_file(&self) -> CliResult<PathBuf> {
        let path = self.dataset().join("tendencies.csv");
        if !path.exists() {
            return Err(CliError::Config(format!(
                "dataset {} not found; run `gen-data` first",
                path.display()
            )));
        }
        Ok(path)
    }
}
