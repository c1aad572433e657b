//! `internal-variability`: spread across unperturbed runs started from
//! distinct on-attractor states, for truth and the classical closures.

use ndarray::Array2;

use l96ens::closures::Checkpoint;
use l96ens::dynamics::{integrate_full, integrate_reduced, Record};
use l96ens::seed::{derive, Role};
use l96ens::uncertainty::internal_variability;

use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::layout::{stage_id, stage_seed, OutDirs};
use crate::manifest::ManifestBuilder;
use crate::stages::common::resolved_init;
use crate::table::Table;

/// Models examined: truth plus the two cheap closures whose dip/fluctuation
/// behavior the experiment contrasts.
const MODELS: [&str; 2] = ["deterministic", "poly_ar1"];

pub fn run(cfg: &ExperimentConfig, dirs: &OutDirs, config_sha: &str) -> CliResult<()> {
    let dir = dirs.ensure(dirs.internal_variability())?;
    let mut mb = ManifestBuilder::new("internal-variability", cfg.seed, config_sha, &dirs.root);

    let states = crate::env::ensure_states(cfg, dirs, &mut mb)?;
    let n_init = cfg.ensemble.n_init.min(states.len());
    let horizon = cfg.internal_variability.horizon_mtu;
    let master = stage_seed(cfg.seed, stage_id::INTERNAL_VARIABILITY);

    let mut table = Table::new(&["model", "t", "sigma"]);

    // Truth: the fully resolved system from each harvested state.
    let mut truth_runs: Vec<Array2<f64>> = Vec::with_capacity(n_init);
    for state in states.iter().take(n_init) {
        let traj = integrate_full(&cfg.params, &cfg.integrator, state, horizon, Record::LargeScale)?;
        truth_runs.push(traj.states);
    }
    let iv = internal_variability(&truth_runs)?;
    drop(truth_runs);
    push_series(&mut table, "truth", &iv.sigma_avg.to_vec(), cfg.integrator.dt_out);

    for (c, stem) in MODELS.iter().enumerate() {
        let ck_path = dirs.checkpoint_file(stem)?;
        mb.input(&ck_path)?;
        let ck = Checkpoint::load(&ck_path)?;
        let mut runs: Vec<Array2<f64>> = Vec::with_capacity(n_init);
        for (i, state) in states.iter().take(n_init).enumerate() {
            let mut closure = ck.closure(l96ens::flows::FlowSampler::Iid)?;
            closure.reset(derive(master, Role::PathNoise, &[c as u64, i as u64]));
            closure.draw_model(derive(master, Role::CoefficientDraw, &[c as u64, i as u64]));
            let init = resolved_init(state, cfg.params.k);
            let traj =
                integrate_reduced(&cfg.params, &cfg.integrator, &init, closure.as_mut(), horizon)?;
            runs.push(traj.states);
        }
        let iv = internal_variability(&runs)?;
        push_series(&mut table, stem, &iv.sigma_avg.to_vec(), cfg.integrator.dt_out);
    }

    let path = dir.join("variability.csv");
    table.write(&path)?;
    mb.artifact(&path)?;
    mb.write(&dir)?;
    println!("internal-variability: {} models x {n_init} runs over {horizon} MTU", MODELS.len() + 1);
    Ok(())
}

fn push_series(table: &mut Table, model: &str, sigma: &[f64], dt: f64) {
    for (idx, v) in sigma.iter().enumerate() {
        table.row(vec![model.into(), (idx as f64 * dt).into(), (*v).into()]);
    }
}
