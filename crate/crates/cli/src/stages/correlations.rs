//! `correlations`: component-averaged autocorrelation of X_k and
//! cross-correlation with the eastern neighbor X_{k+1}, for the truth run
//! and a representative set of reduced models.

use ndarray::{s, Array2};

use l96ens::dynamics::{integrate_reduced, output_steps};
use l96ens::metrics::{acf_field, ccf_field};
use l96ens::seed::{derive, Role};

use crate::config::ExperimentConfig;
use crate::env;
use crate::error::{CliError, CliResult};
use crate::labels::CORRELATION_SET;
use crate::layout::{stage_id, stage_seed, OutDirs};
use crate::manifest::ManifestBuilder;
use crate::stages::common;
use crate::table::Table;

pub fn run(cfg: &ExperimentConfig, dirs: &OutDirs, config_sha: &str) -> CliResult<()> {
    let dir = dirs.ensure(dirs.correlations())?;
    let mut mb = ManifestBuilder::new("correlations", cfg.seed, config_sha, &dirs.root);
    let master = stage_seed(cfg.seed, stage_id::CORRELATIONS);

    let states = env::ensure_states(cfg, dirs, &mut mb)?;
    let dt_out = cfg.integrator.dt_out;
    let max_lag = output_steps(cfg.correlations.max_lag_mtu, dt_out)?;

    // Truth reference: a slice of the first stationary truth run.
    let truth_full = env::load_truth_run(dirs, 0, &mut mb)?;
    let rows = output_steps(cfg.correlations.mtu, dt_out)? + 1;
    if truth_full.nrows() < rows {
        return Err(CliError::Config(format!(
            "truth run has {} rows but the correlation window needs {rows}; \
             increase climatology.mtu or decrease correlations.mtu",
            truth_full.nrows()
        )));
    }
    let truth = truth_full.slice(s![..rows, ..]).to_owned();
    drop(truth_full);

    write_series(&dir, &mut mb, "truth", &curves_for(&truth, max_lag)?, dt_out)?;
    drop(truth);

    for (c, row) in CORRELATION_SET.iter().enumerate() {
        let ck_path = dirs.checkpoint_file(row.stem)?;
        mb.input(&ck_path)?;
        let ck = l96ens::closures::Checkpoint::load(&ck_path)?;
        let sampler = row.sampler;

        let (acf_avg, ccf_avg) = if row.is_flow {
            // Flows are costly to integrate, so estimate from a bank of
            // shorter runs and average the per-run curves.
            let runs = common::flow_bank_runs(
                cfg,
                &ck,
                sampler,
                &states,
                cfg.correlations.flow_members,
                cfg.correlations.flow_mtu,
                master,
                c as u64,
            )?;
            average_curves(&runs, max_lag)?
        } else {
            let mut closure = ck.closure(sampler)?;
            closure.reset(derive(master, Role::PathNoise, &[c as u64, 0]));
            closure.draw_model(derive(master, Role::CoefficientDraw, &[c as u64, 0]));
            let traj = integrate_reduced(
                &cfg.params,
                &cfg.integrator,
                &common::resolved_init(&states[0], cfg.params.k),
                closure.as_mut(),
                cfg.correlations.mtu,
            )?;
            let (_, acf_avg) = acf_field(&traj.states, max_lag)?;
            let (_, ccf_avg) = ccf_field(&traj.states, max_lag)?;
            (acf_avg, ccf_avg)
        };

        write_series(&dir, &mut mb, row.label, &(acf_avg, ccf_avg), dt_out)?;
        println!("correlations: {} done", row.label);
    }

    mb.write(&dir)?;
    Ok(())
}

fn curves_for(x: &Array2<f64>, max_lag: usize) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let (_, acf_avg) = acf_field(x, max_lag)?;
    let (_, ccf_avg) = ccf_field(x, max_lag)?;
    Ok((acf_avg, ccf_avg))
}

/// Mean of the k-averaged ACF/CCF curves over a bank of runs.
fn average_curves(runs: &[Array2<f64>], max_lag: usize) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let mut acf_sum = vec![0.0; max_lag + 1];
    let mut ccf_sum = vec![0.0; max_lag + 1];
    for run in runs {
        let (a, c) = curves_for(run, max_lag)?;
        for (acc, v) in acf_sum.iter_mut().zip(&a) {
            *acc += v;
        }
        for (acc, v) in ccf_sum.iter_mut().zip(&c) {
            *acc += v;
        }
    }
    let n = runs.len() as f64;
    for v in acf_sum.iter_mut().chain(ccf_sum.iter_mut()) {
        *v /= n;
    }
    Ok((acf_sum, ccf_sum))
}

fn write_series(
    dir: &std::path::Path,
    mb: &mut ManifestBuilder,
    label: &str,
    (acf_avg, ccf_avg): &(Vec<f64>, Vec<f64>),
    dt_out: f64,
) -> CliResult<()> {
    let mut t = Table::new(&["lag", "acf", "ccf"]);
    for (lag, (a, c)) in acf_avg.iter().zip(ccf_avg).enumerate() {
        t.row(vec![(lag as f64 * dt_out).into(), (*a).into(), (*c).into()]);
    }
    let path = dir.join(format!("{label}.csv"));
    t.write(&path)?;
    mb.artifact(&path)?;
    Ok(())
}
