//! `gen-data`: diagnose subgrid-tendency training data from a long run of
//! the fully resolved system.

use l96ens::dynamics::build_training_dataset;

use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::layout::{stage_id, stage_seed, OutDirs};
use crate::manifest::ManifestBuilder;

pub fn run(cfg: &ExperimentConfig, dirs: &OutDirs, config_sha: &str) -> CliResult<()> {
    let dir = dirs.ensure(dirs.dataset())?;
    let mut mb = ManifestBuilder::new("gen-data", cfg.seed, config_sha, &dirs.root);

    let seed = stage_seed(cfg.seed, stage_id::GEN_DATA);
    let ds = build_training_dataset(
        &cfg.params,
        &cfg.integrator,
        seed,
        cfg.dataset.n_samples,
        cfg.dataset.train,
        cfg.dataset.val,
    )?;

    let path = dir.join("tendencies.csv");
    ds.write_csv(&path)?;
    mb.artifact(&path)?;
    mb.write(&dir)?;
    println!(
        "gen-data: {} rows ({} train / {} val / {} test), content {}",
        ds.rows(),
        ds.split.train,
        ds.split.val,
        ds.split.test,
        &ds.sha256_hex()[..12],
    );
    Ok(())
}
