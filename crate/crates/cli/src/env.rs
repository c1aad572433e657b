//! Shared experiment environment: on-attractor initial states and the
//! truth climatology runs.
//!
//! Several stages need the same harvested initial states and the same long
//! truth runs. These are expensive, so the first stage that needs them
//! builds and persists them under `env/` (recording them as artifacts in
//! its manifest); later stages load and record them as inputs. All
//! derivations use the master seed only, so the cache content is
//! independent of which stage built it.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use l96ens::dynamics::{advance_full, integrate_full, spin_up, IntegratorConfig, L96Params, Record};
use l96ens::seed::{derive, Role};
use l96ens::uncertainty::{climatology, ClimatologyStats};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::layout::{stage_id, stage_seed, OutDirs};
use crate::manifest::ManifestBuilder;

/// Persisted initial-state harvest.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct StatesFile {
    spin_up_mtu: f64,
    spacing_mtu: f64,
    /// Packed full-system states (resolved then unresolved components).
    states: Vec<Vec<f64>>,
}

/// Sidecar describing the persisted truth runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TruthRunsFile {
    runs: usize,
    rows: usize,
    k: usize,
    dt_out: f64,
    mtu: f64,
}

fn states_path(dirs: &OutDirs) -> PathBuf {
    dirs.env().join("states.json")
}

fn truth_sidecar_path(dirs: &OutDirs) -> PathBuf {
    dirs.env().join("truth_runs.json")
}

fn truth_run_path(dirs: &OutDirs, r: usize) -> PathBuf {
    dirs.env().join(format!("truth_run_{r}.bin"))
}

fn truth_stats_path(dirs: &OutDirs) -> PathBuf {
    dirs.env().join("truth_climatology.json")
}

/// Load or build the shared initial-state harvest: one long spin-up, then
/// states sampled every `spacing_mtu` along the attractor.
pub fn ensure_states(
    cfg: &ExperimentConfig,
    dirs: &OutDirs,
    mb: &mut ManifestBuilder,
) -> CliResult<Vec<Vec<f64>>> {
    let path = states_path(dirs);
    if path.exists() {
        let text = std::fs::read_to_string(&path)?;
        let file: StatesFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("bad states cache {}: {e}", path.display())))?;
        if file.spin_up_mtu != cfg.states.spin_up_mtu
            || file.spacing_mtu != cfg.states.spacing_mtu
            || file.states.len() < cfg.states.n_states
        {
            return Err(CliError::Config(format!(
                "state cache {} was built with different settings; remove the env directory to rebuild",
                path.display()
            )));
        }
        mb.input(&path)?;
        return Ok(file.states);
    }

    dirs.ensure(dirs.env())?;
    let states = harvest_states(
        &cfg.params,
        &cfg.integrator,
        cfg.seed,
        cfg.states.spin_up_mtu,
        cfg.states.spacing_mtu,
        cfg.states.n_states,
    )?;
    let file = StatesFile {
        spin_up_mtu: cfg.states.spin_up_mtu,
        spacing_mtu: cfg.states.spacing_mtu,
        states: states.clone(),
    };
    let text = serde_json::to_string(&file)
        .map_err(|e| CliError::Config(format!("states serialization: {e}")))?;
    std::fs::write(&path, text)?;
    mb.artifact(&path)?;
    Ok(states)
}

/// Spin up once, then hop along the trajectory collecting one packed state
/// per spacing interval.
fn harvest_states(
    p: &L96Params,
    icfg: &IntegratorConfig,
    master: u64,
    spin_up_mtu: f64,
    spacing_mtu: f64,
    n_states: usize,
) -> CliResult<Vec<Vec<f64>>> {
    let env_master = stage_seed(master, stage_id::ENV);
    let seed = derive(env_master, Role::PerfectStates, &[]);
    let mut state = spin_up(p, icfg, seed, spin_up_mtu)?;
    let mut states = Vec::with_capacity(n_states);
    states.push(state.clone());
    for _ in 1..n_states {
        advance_full(p, icfg, &mut state, spacing_mtu)?;
        states.push(state.clone());
    }
    Ok(states)
}

/// Load or build the truth climatology runs and their pooled statistics.
/// Each run spins up independently and records the resolved components for
/// `climatology.mtu` model time units.
pub fn ensure_truth_runs(
    cfg: &ExperimentConfig,
    dirs: &OutDirs,
    mb: &mut ManifestBuilder,
) -> CliResult<(Vec<Array2<f64>>, ClimatologyStats)> {
    let sidecar_path = truth_sidecar_path(dirs);
    if sidecar_path.exists() {
        let text = std::fs::read_to_string(&sidecar_path)?;
        let sidecar: TruthRunsFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("bad truth-run cache: {e}")))?;
        if sidecar.runs != cfg.climatology.runs || sidecar.mtu != cfg.climatology.mtu {
            return Err(CliError::Config(
                "truth-run cache was built with different settings; remove the env directory to rebuild".into(),
            ));
        }
        let mut runs = Vec::with_capacity(sidecar.runs);
        for r in 0..sidecar.runs {
            let path = truth_run_path(dirs, r);
            runs.push(read_matrix(&path, sidecar.rows, sidecar.k)?);
            mb.input(&path)?;
        }
        mb.input(&sidecar_path)?;
        let stats_path = truth_stats_path(dirs);
        let stats: ClimatologyStats = serde_json::from_str(&std::fs::read_to_string(&stats_path)?)
            .map_err(|e| CliError::Config(format!("bad climatology cache: {e}")))?;
        mb.input(&stats_path)?;
        return Ok((runs, stats));
    }

    dirs.ensure(dirs.env())?;
    let env_master = stage_seed(cfg.seed, stage_id::ENV);
    // Seeds are derived from the run index, so the runs can execute on any
    // worker in any order.
    let runs = (0..cfg.climatology.runs)
        .into_par_iter()
        .map(|r| {
            let seed = derive(env_master, Role::Climatology, &[r as u64]);
            let state = spin_up(&cfg.params, &cfg.integrator, seed, cfg.states.spin_up_mtu)?;
            let traj = integrate_full(
                &cfg.params,
                &cfg.integrator,
                &state,
                cfg.climatology.mtu,
                Record::LargeScale,
            )?;
            Ok(traj.states)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let stats = climatology(&runs)?;

    let sidecar = TruthRunsFile {
        runs: runs.len(),
        rows: runs[0].nrows(),
        k: runs[0].ncols(),
        dt_out: cfg.integrator.dt_out,
        mtu: cfg.climatology.mtu,
    };
    for (r, run) in runs.iter().enumerate() {
        let path = truth_run_path(dirs, r);
        write_matrix(&path, run)?;
        mb.artifact(&path)?;
    }
    std::fs::write(
        &sidecar_path,
        serde_json::to_string_pretty(&sidecar)
            .map_err(|e| CliError::Config(format!("sidecar serialization: {e}")))?,
    )?;
    mb.artifact(&sidecar_path)?;
    let stats_path = truth_stats_path(dirs);
    std::fs::write(
        &stats_path,
        serde_json::to_string_pretty(&stats)
            .map_err(|e| CliError::Config(format!("stats serialization: {e}")))?,
    )?;
    mb.artifact(&stats_path)?;
    Ok((runs, stats))
}

/// Load just the truth climatology statistics (σ_clim, mean), building the
/// runs if needed.
pub fn ensure_truth_stats(
    cfg: &ExperimentConfig,
    dirs: &OutDirs,
    mb: &mut ManifestBuilder,
) -> CliResult<ClimatologyStats> {
    let stats_path = truth_stats_path(dirs);
    if stats_path.exists() {
        let stats: ClimatologyStats = serde_json::from_str(&std::fs::read_to_string(&stats_path)?)
            .map_err(|e| CliError::Config(format!("bad climatology cache: {e}")))?;
        mb.input(&stats_path)?;
        return Ok(stats);
    }
    let (_, stats) = ensure_truth_runs(cfg, dirs, mb)?;
    Ok(stats)
}

/// Load one persisted truth run (for stationary-statistics stages).
pub fn load_truth_run(dirs: &OutDirs, r: usize, mb: &mut ManifestBuilder) -> CliResult<Array2<f64>> {
    let sidecar_path = truth_sidecar_path(dirs);
    if !sidecar_path.exists() {
        return Err(CliError::Config(
            "truth runs not found; run `climatology` first or use `suite`".into(),
        ));
    }
    let sidecar: TruthRunsFile = serde_json::from_str(&std::fs::read_to_string(&sidecar_path)?)
        .map_err(|e| CliError::Config(format!("bad truth-run cache: {e}")))?;
    if r >= sidecar.runs {
        return Err(CliError::Config(format!(
            "truth run {r} not available ({} persisted)",
            sidecar.runs
        )));
    }
    let path = truth_run_path(dirs, r);
    let m = read_matrix(&path, sidecar.rows, sidecar.k)?;
    mb.input(&path)?;
    Ok(m)
}

/// Raw little-endian f64 matrix, row-major.
fn write_matrix(path: &Path, m: &Array2<f64>) -> CliResult<()> {
    use std::io::Write as _;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for v in m.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_matrix(path: &Path, rows: usize, cols: usize) -> CliResult<Array2<f64>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() != rows * cols * 8 {
        return Err(CliError::Config(format!(
            "{} has {} bytes, expected {} for a {rows}×{cols} matrix",
            path.display(),
            bytes.len(),
            rows * cols * 8
        )));
    }
    let vals: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Array2::from_shape_vec((rows, cols), vals)
        .map_err(|e| CliError::Config(format!("matrix shape: {e}")))
}
