//! `report`: aggregate stage outputs into compact plot-ready tables. This
//! stage only rearranges numbers already on disk; it never recomputes.

use std::path::Path;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::labels::ENSEMBLE_SET;
use crate::layout::OutDirs;
use crate::manifest::ManifestBuilder;
use crate::table::Table;

pub fn run(cfg: &ExperimentConfig, dirs: &OutDirs, config_sha: &str) -> CliResult<()> {
    let dir = dirs.ensure(dirs.report())?;
    let mut mb = ManifestBuilder::new("report", cfg.seed, config_sha, &dirs.root);

    // Climatology distance table, re-emitted verbatim as the headline summary.
    let distances = dirs.climatology().join("distances.csv");
    if !distances.exists() {
        return Err(CliError::Config(
            "climatology distances not found; run `climatology` first".into(),
        ));
    }
    mb.input(&distances)?;
    let summary_path = dir.join("summary.csv");
    std::fs::copy(&distances, &summary_path)?;
    mb.artifact(&summary_path)?;

    // Early-growth slopes of total spread, one row per decomposed ensemble.
    let mut slopes = Table::new(&["model", "slope"]);
    for row in &ENSEMBLE_SET {
        let json_path = dirs.decomposition().join(format!("{}.json", row.label));
        if !json_path.exists() {
            return Err(CliError::Config(format!(
                "decomposition summary for `{}` not found; run `decompose` first",
                row.label
            )));
        }
        mb.input(&json_path)?;
        let text = std::fs::read_to_string(&json_path)?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", json_path.display())))?;
        match value.get("slope").and_then(|s| s.as_f64()) {
            Some(m) => slopes.row(vec![row.label.into(), m.into()]),
            None => slopes.row(vec![row.label.into(), "".into()]),
        }
    }
    let slopes_path = dir.join("slopes.csv");
    slopes.write(&slopes_path)?;
    mb.artifact(&slopes_path)?;

    // Spread–error consistency distance at the calibration marker times.
    let mut consistency = Table::new(&["model", "t", "consistency_distance"]);
    for row in &ENSEMBLE_SET {
        let csv_path = dirs.skill().join(format!("{}.csv", row.label));
        if !csv_path.exists() {
            return Err(CliError::Config(format!(
                "skill series for `{}` not found; run `skill` first",
                row.label
            )));
        }
        mb.input(&csv_path)?;
        for (t, d) in marker_rows(&csv_path, &[1.0, 2.0, 3.0])? {
            consistency.row(vec![row.label.into(), t.into(), d.into()]);
        }
    }
    let consistency_path = dir.join("consistency.csv");
    consistency.write(&consistency_path)?;
    mb.artifact(&consistency_path)?;

    mb.write(&dir)?;
    println!("report: wrote {}", dir.display());
    let _ = cfg;
    Ok(())
}

/// Pull (t, consistency_distance) for each marker time present in a skill
/// series CSV (columns t,rmse,ancr,spread,consistency_distance).
fn marker_rows(path: &Path, markers: &[f64]) -> CliResult<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(CliError::Config(format!(
                "{}: expected 5 columns, got {}",
                path.display(),
                fields.len()
            )));
        }
        let t: f64 = fields[0]
            .parse()
            .map_err(|e| CliError::Config(format!("{}: bad time field: {e}", path.display())))?;
        if markers.iter().any(|&m| (t - m).abs() < 1e-9) {
            let d: f64 = fields[4].parse().map_err(|e| {
                CliError::Config(format!("{}: bad distance field: {e}", path.display()))
            })?;
            out.push((t, d));
        }
    }
    Ok(out)
}
