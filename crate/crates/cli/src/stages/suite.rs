//! `suite`: run every stage in dependency order. A stage failure aborts
//! that stage only; later stages that can still run do, and the suite
//! manifest records which stages completed and which aborted.

use std::path::PathBuf;
use std::time::Instant;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::layout::OutDirs;
use crate::manifest::{FileRecord, SuiteManifest};
use crate::stages;

type StageFn = fn(&ExperimentConfig, &OutDirs, &str) -> CliResult<()>;

pub fn run(cfg: &ExperimentConfig, dirs: &OutDirs, config_sha: &str) -> CliResult<()> {
    let started = Instant::now();
    let plan: [(&str, StageFn, PathBuf); 10] = [
        ("gen-data", stages::gen_data::run, dirs.dataset()),
        ("fit", stages::fit::run, dirs.checkpoints()),
        ("climatology", stages::climatology::run, dirs.climatology()),
        (
            "internal-variability",
            stages::internal_variability::run,
            dirs.internal_variability(),
        ),
        ("sensitivity", stages::sensitivity::run, dirs.sensitivity()),
        ("ensemble", stages::ensembles::run, dirs.ensembles()),
        ("decompose", stages::decompose::run, dirs.decomposition()),
        ("skill", stages::skill::run, dirs.skill()),
        ("correlations", stages::correlations::run, dirs.correlations()),
        ("report", stages::report::run, dirs.report()),
    ];

    let mut stage_records = Vec::new();
    let mut failed: Vec<(String, String)> = Vec::new();
    let mut first_error: Option<CliError> = None;
    for (name, stage, dir) in plan {
        println!("suite: {name}");
        match stage(cfg, dirs, config_sha) {
            Ok(()) => {
                let mpath = dir.join("manifest.json");
                let sha256 = l96ens::io::sha256_file(&mpath).map_err(|e| {
                    CliError::Config(format!("hashing {}: {e}", mpath.display()))
                })?;
                let rel = mpath
                    .strip_prefix(&dirs.root)
                    .unwrap_or(&mpath)
                    .to_string_lossy()
                    .replace('\\', "/");
                stage_records.push(FileRecord { path: rel, sha256 });
            }
            Err(e) => {
                eprintln!("suite: stage `{name}` failed: {e}");
                failed.push((name.to_string(), e.to_string()));
                if first_error.is_none() {
                    first_error = Some(e);
                }
            }
        }
    }

    let status = if failed.is_empty() { "ok" } else { "partial" };
    let manifest = SuiteManifest {
        command: "suite".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        config_sha256: config_sha.to_string(),
        stages: stage_records,
        failed_stages: failed,
        wall_clock_sec: started.elapsed().as_secs_f64(),
        status: status.to_string(),
    };
    manifest.write(&dirs.root)?;
    println!("suite: {status} in {:.1}s", manifest.wall_clock_sec);

    match first_error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
