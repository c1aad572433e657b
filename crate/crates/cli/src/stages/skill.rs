//! `skill`: forecast-verification metrics (ensemble-mean RMSE, anomaly
//! correlation, RMS spread, spread–skill consistency distance) for every
//! persisted ensemble cube, pooling all members of each cube.

use ndarray::Axis;
use serde::Serialize;

use l96ens::ensemble::EnsembleCube;
use l96ens::metrics::{ancr, consistency_distance, rms_spread, rmse};

use crate::config::ExperimentConfig;
use crate::env;
use crate::error::{CliError, CliResult};
use crate::layout::OutDirs;
use crate::manifest::ManifestBuilder;
use crate::stages::decompose::CUBE_LABELS;
use crate::table::Table;

#[derive(Serialize)]
struct SkillSummary<'a> {
    label: &'a str,
    n_init_used: usize,
    n_members: usize,
    /// (state, time) cells skipped by the anomaly correlation because the
    /// truth anomaly had no variance.
    ancr_excluded: usize,
    config_sha256: &'a str,
}

pub fn run(cfg: &ExperimentConfig, dirs: &OutDirs, config_sha: &str) -> CliResult<()> {
    let dir = dirs.ensure(dirs.skill())?;
    let mut mb = ManifestBuilder::new("skill", cfg.seed, config_sha, &dirs.root);

    let stats = env::ensure_truth_stats(cfg, dirs, &mut mb)?;

    for label in CUBE_LABELS {
        let base = dirs.ensembles().join(label);
        if !base.with_extension("json").exists() {
            return Err(CliError::Config(format!(
                "ensemble cube `{label}` not found under {}; run `ensemble` first",
                dirs.ensembles().display()
            )));
        }
        mb.input(&base.with_extension("bin"))?;
        mb.input(&base.with_extension("json"))?;
        let cube = EnsembleCube::load(&base)?;

        // Metrics cannot average over failed members, so drop every initial
        // state with at least one failure before scoring.
        let tainted = cube.tainted_inits();
        let keep: Vec<usize> = (0..cube.n_init()).filter(|i| !tainted.contains(i)).collect();
        if keep.is_empty() {
            return Err(CliError::Numerical(format!(
                "cube `{label}`: every initial state has a failed member"
            )));
        }
        let data = cube.data.select(Axis(0), &keep);
        let truth = cube.truth.select(Axis(0), &keep);

        let err = rmse(&data, &truth)?;
        let (corr, excluded) = ancr(&data, &truth, stats.mean)?;
        let spread = rms_spread(&data)?;

        let mut t = Table::new(&["t", "rmse", "ancr", "spread", "consistency_distance"]);
        for (r, &time) in cube.times.iter().enumerate() {
            let d = consistency_distance(err[r], spread[r], cube.n_members())?;
            t.row(vec![
                time.into(),
                err[r].into(),
                corr[r].into(),
                spread[r].into(),
                d.into(),
            ]);
        }
        let csv_path = dir.join(format!("{label}.csv"));
        t.write(&csv_path)?;
        mb.artifact(&csv_path)?;

        let summary = SkillSummary {
            label,
            n_init_used: keep.len(),
            n_members: cube.n_members(),
            ancr_excluded: excluded,
            config_sha256: config_sha,
        };
        let json_path = dir.join(format!("{label}.json"));
        std::fs::write(
            &json_path,
            serde_json::to_string_pretty(&summary)
                .map_err(|e| CliError::Config(format!("summary serialization: {e}")))?,
        )?;
        mb.artifact(&json_path)?;
        println!(
            "skill: {label} rmse(t_end)={:.3} spread(t_end)={:.3}",
            err[err.len() - 1],
            spread[spread.len() - 1],
        );
    }

    mb.write(&dir)?;
    Ok(())
}
