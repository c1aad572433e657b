//! `climatology`: long stationary runs of every model, compared to truth
//! through pooled-sample distribution distances (Hellinger, KS) and the
//! climatological amplitude table.

use ndarray::Array2;

use l96ens::closures::Checkpoint;
use l96ens::dynamics::integrate_reduced;
use l96ens::metrics::{hellinger, ks_statistic, Histogram};
use l96ens::seed::{derive, Role};
use l96ens::uncertainty::climatology;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::labels::{EvalRow, EVAL_SET};
use crate::layout::{stage_id, stage_seed, OutDirs};
use crate::manifest::ManifestBuilder;
use crate::stages::common::{flow_bank_runs, resolved_init};
use crate::table::Table;

pub fn run(cfg: &ExperimentConfig, dirs: &OutDirs, config_sha: &str) -> CliResult<()> {
    let dir = dirs.ensure(dirs.climatology())?;
    let mut mb = ManifestBuilder::new("climatology", cfg.seed, config_sha, &dirs.root);

    let (truth_runs, truth_stats) = crate::env::ensure_truth_runs(cfg, dirs, &mut mb)?;
    let states = crate::env::ensure_states(cfg, dirs, &mut mb)?;
    if cfg.climatology.flow_members > states.len() || cfg.climatology.runs > states.len() {
        return Err(CliError::Config(format!(
            "climatology needs {} flow members and {} run starts but only {} states are harvested",
            cfg.climatology.flow_members,
            cfg.climatology.runs,
            states.len()
        )));
    }
    let truth_pool: Vec<f64> = truth_runs.iter().flat_map(|r| r.iter().copied()).collect();
    drop(truth_runs);

    let mut distances = Table::new(&["model", "hellinger", "ks"]);
    let mut sigma = Table::new(&["model", "mean", "sigma"]);
    sigma.row(vec!["truth".into(), truth_stats.mean.into(), truth_stats.sigma.into()]);

    let master = stage_seed(cfg.seed, stage_id::CLIMATOLOGY);
    for (row_idx, row) in EVAL_SET.iter().enumerate() {
        let runs = stationary_runs(cfg, dirs, &mut mb, master, row_idx as u64, row, &states)?;
        let model_stats = climatology(&runs)?;
        sigma.row(vec![row.label.into(), model_stats.mean.into(), model_stats.sigma.into()]);

        let model_pool: Vec<f64> = runs.iter().flat_map(|r| r.iter().copied()).collect();
        drop(runs);
        let (hp, hq) = Histogram::shared_pair(&truth_pool, &model_pool, cfg.climatology.n_bins)?;
        let h = hellinger(&hp, &hq)?;
        let ks = ks_statistic(&truth_pool, &model_pool)?;
        distances.row(vec![row.label.into(), h.into(), ks.into()]);
        println!("climatology: {} H={h:.4} KS={ks:.4} sigma={:.3}", row.label, model_stats.sigma);
    }

    let dist_path = dir.join("distances.csv");
    distances.write(&dist_path)?;
    mb.artifact(&dist_path)?;
    let sigma_path = dir.join("sigma.csv");
    sigma.write(&sigma_path)?;
    mb.artifact(&sigma_path)?;
    mb.write(&dir)?;
    Ok(())
}

/// Long stationary runs for one evaluation row: independent single runs
/// for the classical closures, one lockstep member bank for flows.
pub fn stationary_runs(
    cfg: &ExperimentConfig,
    dirs: &OutDirs,
    mb: &mut ManifestBuilder,
    master: u64,
    row_idx: u64,
    row: &EvalRow,
    states: &[Vec<f64>],
) -> CliResult<Vec<Array2<f64>>> {
    let ck_path = dirs.checkpoint_file(row.stem)?;
    mb.input(&ck_path)?;
    let ck = Checkpoint::load(&ck_path)?;
    if row.is_flow {
        flow_bank_runs(
            cfg,
            &ck,
            row.sampler,
            states,
            cfg.climatology.flow_members,
            cfg.climatology.flow_mtu,
            master,
            row_idx,
        )
    } else {
        let mut runs = Vec::with_capacity(cfg.climatology.runs);
        for (r, state) in states.iter().enumerate().take(cfg.climatology.runs) {
            let mut closure = ck.closure(row.sampler)?;
            closure.reset(derive(master, Role::PathNoise, &[row_idx, r as u64]));
            closure.draw_model(derive(master, Role::CoefficientDraw, &[row_idx, r as u64]));
            let init = resolved_init(state, cfg.params.k);
            let traj = integrate_reduced(
                &cfg.params,
                &cfg.integrator,
                &init,
                closure.as_mut(),
                cfg.climatology.mtu,
            )?;
            runs.push(traj.states);
        }
        Ok(runs)
    }
}
