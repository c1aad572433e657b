//! `sensitivity`: perturbed-initial-condition ensembles of the fully
//! resolved system — the intrinsic-predictability reference (pairwise
//! member divergence and spread growth to saturation).

use l96ens::ensemble::run_truth_ensemble;
use l96ens::metrics::{apd, rms_spread};

use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::layout::{stage_id, stage_seed, OutDirs};
use crate::manifest::ManifestBuilder;
use crate::table::Table;

pub fn run(cfg: &ExperimentConfig, dirs: &OutDirs, config_sha: &str) -> CliResult<()> {
    let dir = dirs.ensure(dirs.sensitivity())?;
    let mut mb = ManifestBuilder::new("sensitivity", cfg.seed, config_sha, &dirs.root);

    let states = crate::env::ensure_states(cfg, dirs, &mut mb)?;
    let stats = crate::env::ensure_truth_stats(cfg, dirs, &mut mb)?;
    let n_init = cfg.ensemble.n_init.min(states.len());
    let seed = stage_seed(cfg.seed, stage_id::SENSITIVITY);

    let (data, times) = run_truth_ensemble(
        &cfg.params,
        &cfg.integrator,
        n_init,
        cfg.sensitivity.n_ens,
        cfg.sensitivity.pert_frac,
        cfg.sensitivity.horizon_mtu,
        cfg.sensitivity.store_stride,
        seed,
        &states,
        stats.sigma,
    )?;
    let apd_series = apd(&data)?;
    let spread_series = rms_spread(&data)?;

    let mut table = Table::new(&["t", "apd", "rms_spread"]);
    for (r, &t) in times.iter().enumerate() {
        table.row(vec![t.into(), apd_series[r].into(), spread_series[r].into()]);
    }
    let path = dir.join("apd.csv");
    table.write(&path)?;
    mb.artifact(&path)?;
    mb.write(&dir)?;
    println!(
        "sensitivity: {n_init}x{} truth ensemble to {} MTU; APD {:.3} -> {:.3}",
        cfg.sensitivity.n_ens,
        cfg.sensitivity.horizon_mtu,
        apd_series[0],
        apd_series[apd_series.len() - 1],
    );
    Ok(())
}
