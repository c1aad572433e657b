//! `decompose`: ANOVA-style variance decomposition of every persisted
//! factorial cube, plus total-spread/mean series for every cube (pooled
//! cubes included) for the pooled-vs-factorial comparison.

use std::path::Path;

use serde::Serialize;

use l96ens::ensemble::EnsembleCube;
use l96ens::uncertainty::{decompose, total_spread, VarianceDecomposition};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::layout::OutDirs;
use crate::manifest::ManifestBuilder;
use crate::table::Table;

/// All cubes the ensemble stage produces, in report order.
pub const CUBE_LABELS: [&str; 6] = [
    "deterministic",
    "poly_ar1",
    "bayesian",
    "flow_base_ar1_latent_ar1",
    "poly_ar1_mixed_matched",
    "poly_ar1_mixed_independent",
];

#[derive(Serialize)]
struct DecompositionSummary<'a> {
    label: &'a str,
    /// Early-growth slope of the component-averaged total spread.
    slope: Option<f64>,
    n_init_used: usize,
    n_ens: usize,
    n_model: usize,
    config_sha256: &'a str,
}

pub fn run(cfg: &ExperimentConfig, dirs: &OutDirs, config_sha: &str) -> CliResult<()> {
    let dir = dirs.ensure(dirs.decomposition())?;
    let mut mb = ManifestBuilder::new("decompose", cfg.seed, config_sha, &dirs.root);
    let _ = cfg;

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

        if cube.is_separated() {
            let dec = decompose(&cube)?;
            let csv_path = dir.join(format!("{label}.csv"));
            write_decomposition_csv(&csv_path, &dec)?;
            mb.artifact(&csv_path)?;

            let summary = DecompositionSummary {
                label,
                slope: dec.slope,
                n_init_used: dec.n_init_used,
                n_ens: dec.n_ens,
                n_model: dec.n_model,
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
                "decompose: {label} slope={}",
                summary.slope.map_or("n/a".into(), |s| format!("{s:.4}")),
            );
        }

        let total = total_spread(&cube)?;
        let total_path = dir.join(format!("{label}_total.csv"));
        let mut t = Table::new(&["t", "k", "v_total", "sd_total", "mean"]);
        let kd = total.v_total.ncols();
        for (r, &time) in total.times.iter().enumerate() {
            for d in 0..kd {
                t.row(vec![
                    time.into(),
                    d.into(),
                    total.v_total[[r, d]].into(),
                    total.v_total[[r, d]].sqrt().into(),
                    total.mean[[r, d]].into(),
                ]);
            }
            t.row(vec![
                time.into(),
                "avg".into(),
                (total.sigma_avg[r] * total.sigma_avg[r]).into(),
                total.sigma_avg[r].into(),
                total.mean_avg[r].into(),
            ]);
        }
        t.write(&total_path)?;
        mb.artifact(&total_path)?;
    }

    mb.write(&dir)?;
    Ok(())
}

fn write_decomposition_csv(path: &Path, dec: &VarianceDecomposition) -> CliResult<()> {
    let mut t = Table::new(&[
        "t",
        "k",
        "v_total",
        "v_ens",
        "v_model",
        "interaction",
        "sd_total",
        "sd_ens",
        "sd_model",
    ]);
    let kd = dec.v_total.ncols();
    for (r, &time) in dec.times.iter().enumerate() {
        for d in 0..kd {
            t.row(vec![
                time.into(),
                d.into(),
                dec.v_total[[r, d]].into(),
                dec.v_ens[[r, d]].into(),
                dec.v_model[[r, d]].into(),
                dec.interaction[[r, d]].into(),
                dec.sd_total[[r, d]].into(),
                dec.sd_ens[[r, d]].into(),
                dec.sd_model[[r, d]].into(),
            ]);
        }
        t.row(vec![
            time.into(),
            "avg".into(),
            dec.v_total_avg[r].into(),
            dec.v_ens_avg[r].into(),
            dec.v_model_avg[r].into(),
            dec.interaction_avg[r].into(),
            dec.sd_total_avg[r].into(),
            dec.sd_ens_avg[r].into(),
            dec.sd_model_avg[r].into(),
        ]);
    }
    t.write(path)
}
