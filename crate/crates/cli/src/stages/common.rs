//! Helpers shared by several stages.

use ndarray::{Array2, Array3};

use l96ens::closures::Checkpoint;
use l96ens::dynamics::integrate_reduced_bank;
use l96ens::flows::FlowSampler;
use l96ens::seed::{derive, Role};

use crate::config::ExperimentConfig;
use crate::error::CliResult;

/// The resolved components of a packed full-system state.
pub fn resolved_init(state: &[f64], k: usize) -> Vec<f64> {
    state[..k].to_vec()
}

/// Run a flow checkpoint as a lockstep bank of `members` independent
/// trajectories of length `mtu`, one start state per member, and return
/// them as per-member `(T, K)` runs.
#[allow(clippy::too_many_arguments)]
pub fn flow_bank_runs(
    cfg: &ExperimentConfig,
    ck: &Checkpoint,
    sampler: FlowSampler,
    states: &[Vec<f64>],
    members: usize,
    mtu: f64,
    master: u64,
    row_idx: u64,
) -> CliResult<Vec<Array2<f64>>> {
    let k = cfg.params.k;
    let mut bank = ck.bank(sampler, members)?;
    let mut inits = Array2::zeros((members, k));
    for b in 0..members {
        for d in 0..k {
            inits[[b, d]] = states[b][d];
        }
        bank.reset_member(b, derive(master, Role::PathNoise, &[row_idx, b as u64]));
        bank.draw_model_member(b, derive(master, Role::CoefficientDraw, &[row_idx, b as u64]));
    }
    let cube: Array3<f64> = integrate_reduced_bank(&cfg.params, &cfg.integrator, &inits, bank.as_mut(), mtu, 1)?;
    let (n_b, n_t, n_k) = cube.dim();
    let mut runs = Vec::with_capacity(n_b);
    for b in 0..n_b {
        let mut m = Array2::zeros((n_t, n_k));
        for t in 0..n_t {
            for d in 0..n_k {
                m[[t, d]] = cube[[b, t, d]];
            }
        }
        runs.push(m);
    }
    Ok(runs)
}
