//! `ensemble`: forecast ensembles for the standard model set — factorial
//! (perturbation × model-realization) cubes for every model, plus pooled
//! single-index variants of the polynomial+AR(1) model for the
//! pooled-vs-factorial comparison.

use ndarray::Array3;

use l96ens::closures::Checkpoint;
use l96ens::dynamics::{integrate_full, output_steps, Record};
use l96ens::ensemble::{run_ensemble, EnsembleConfig, EnsembleCube, EnsembleMode};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::labels::ENSEMBLE_SET;
use crate::layout::{stage_id, stage_subtask_seed, stage_task_seed, OutDirs};
use crate::manifest::ManifestBuilder;

/// Fraction of failed members above which the stage reports partial
/// failure (exit code 4).
pub const FAILURE_TOLERANCE: f64 = 0.01;

/// Index of the polynomial+AR(1) model within the ensemble set; it is the
/// model the pooled-mode comparison uses.
const MIXED_MODEL: usize = 1;

pub fn run(cfg: &ExperimentConfig, dirs: &OutDirs, config_sha: &str) -> CliResult<()> {
    let dir = dirs.ensure(dirs.ensembles())?;
    let mut mb = ManifestBuilder::new("ensemble", cfg.seed, config_sha, &dirs.root);

    let states = crate::env::ensure_states(cfg, dirs, &mut mb)?;
    let stats = crate::env::ensure_truth_stats(cfg, dirs, &mut mb)?;
    let n_init = cfg.ensemble.n_init;

    // Unperturbed truth forecast per initial state, shared by every model.
    let n_out = output_steps(cfg.ensemble.horizon_mtu, cfg.integrator.dt_out)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut truth = Array3::zeros((n_init, n_out + 1, cfg.params.k));
    for (i, state) in states.iter().take(n_init).enumerate() {
        let traj = integrate_full(
            &cfg.params,
            &cfg.integrator,
            state,
            cfg.ensemble.horizon_mtu,
            Record::LargeScale,
        )?;
        for t in 0..=n_out {
            for d in 0..cfg.params.k {
                truth[[i, t, d]] = traj.states[[t, d]];
            }
        }
    }

    let mut worst_failure: f64 = 0.0;
    let base_cfg = |seed: u64| EnsembleConfig {
        n_init,
        n_ens: cfg.ensemble.n_ens,
        n_model: cfg.ensemble.n_model,
        spacing: cfg.states.spacing_mtu,
        pert_frac: cfg.ensemble.pert_frac,
        horizon: cfg.ensemble.horizon_mtu,
        store_stride: cfg.ensemble.store_stride,
        seed,
    };

    for (c, row) in ENSEMBLE_SET.iter().enumerate() {
        let ck_path = dirs.checkpoint_file(row.stem)?;
        mb.input(&ck_path)?;
        let ck = Checkpoint::load(&ck_path)?;
        let seed = stage_task_seed(cfg.seed, stage_id::ENSEMBLE, c as u64);
        let cube = run_ensemble(
            &cfg.params,
            &cfg.integrator,
            &base_cfg(seed),
            &ck,
            row.sampler,
            &states,
            &truth,
            stats.sigma,
            EnsembleMode::Separated,
        )?;
        worst_failure = worst_failure.max(save_cube(&dir, row.label, &cube, &mut mb)?);
        println!(
            "ensemble: {} separated ({}x{}x{}), {} failures",
            row.label,
            n_init,
            cfg.ensemble.n_ens,
            cfg.ensemble.n_model,
            cube.failures.len()
        );

        if c == MIXED_MODEL {
            // Pooled single-index variants: one reusing the factorial
            // run's seed layout member-for-member, one independently
            // seeded.
            let matched = run_ensemble(
                &cfg.params,
                &cfg.integrator,
                &base_cfg(seed),
                &ck,
                row.sampler,
                &states,
                &truth,
                stats.sigma,
                EnsembleMode::MixedMatched,
            )?;
            let label = format!("{}_mixed_matched", row.label);
            worst_failure = worst_failure.max(save_cube(&dir, &label, &matched, &mut mb)?);
            drop(matched);

            let ind_seed = stage_subtask_seed(cfg.seed, stage_id::ENSEMBLE, c as u64, 1);
            let independent = run_ensemble(
                &cfg.params,
                &cfg.integrator,
                &base_cfg(ind_seed),
                &ck,
                row.sampler,
                &states,
                &truth,
                stats.sigma,
                EnsembleMode::MixedIndependent,
            )?;
            let label = format!("{}_mixed_independent", row.label);
            worst_failure = worst_failure.max(save_cube(&dir, &label, &independent, &mut mb)?);
            println!("ensemble: {} pooled variants (matched + independent)", row.label);
        }
    }

    let failures = mb.member_failures();
    mb.write(&dir)?;
    if worst_failure > FAILURE_TOLERANCE {
        return Err(CliError::PartialFailure(format!(
            "{failures} member failures; worst cube lost {:.2}% of members (tolerance {:.0}%)",
            worst_failure * 100.0,
            FAILURE_TOLERANCE * 100.0
        )));
    }
    Ok(())
}

fn save_cube(
    dir: &std::path::Path,
    label: &str,
    cube: &EnsembleCube,
    mb: &mut ManifestBuilder,
) -> CliResult<f64> {
    let (bin, json) = cube.save(&dir.join(label))?;
    mb.artifact(&bin)?;
    mb.artifact(&json)?;
    mb.add_failures(cube.failures.len());
    Ok(cube.failure_fraction())
}
