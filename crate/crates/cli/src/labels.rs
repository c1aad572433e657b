//! The standard closure sets: which models get fitted, and which
//! (model, sampler) rows appear in the distribution-distance tables.

use l96ens::flows::{FlowSampler, FlowVariant};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

/// One checkpoint to fit. `stem` names the checkpoint file
/// (`checkpoints/<stem>.json`).
#[derive(Debug, Clone, Copy)]
pub struct FitSpec {
    pub stem: &'static str,
    pub kind: FitKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitKind {
    Deterministic,
    PolyAr1,
    Bayesian,
    Flow(FlowVariant),
}

/// The eight standard checkpoints, in fit order. The index of each entry
/// is its stable seed offset for training streams.
pub const FIT_SET: [FitSpec; 8] = [
    FitSpec { stem: "deterministic", kind: FitKind::Deterministic },
    FitSpec { stem: "poly_ar1", kind: FitKind::PolyAr1 },
    FitSpec { stem: "bayesian", kind: FitKind::Bayesian },
    FitSpec { stem: "flow_normal", kind: FitKind::Flow(FlowVariant::Normal) },
    FitSpec { stem: "flow_hist1", kind: FitKind::Flow(FlowVariant::History { tau: 1 }) },
    FitSpec { stem: "flow_hist2", kind: FitKind::Flow(FlowVariant::History { tau: 2 }) },
    FitSpec { stem: "flow_base_ar1", kind: FitKind::Flow(FlowVariant::BaseAr1) },
    FitSpec { stem: "flow_tail", kind: FitKind::Flow(FlowVariant::Tail) },
];

/// Index of a fit spec by checkpoint stem.
pub fn fit_index(stem: &str) -> Option<usize> {
    FIT_SET.iter().position(|s| s.stem == stem)
}

/// Resolve which checkpoints a `fit` invocation builds.
pub fn requested_fits(cfg: &ExperimentConfig) -> CliResult<Vec<&'static FitSpec>> {
    let set: Vec<&FitSpec> = match cfg.closure.kind.as_str() {
        "all" => FIT_SET.iter().collect(),
        "deterministic" => vec![&FIT_SET[0]],
        "poly_ar1" => vec![&FIT_SET[1]],
        "bayesian" => vec![&FIT_SET[2]],
        "flow" => {
            let variant = crate::config::parse_variant(cfg.closure.variant.as_deref().unwrap_or(""))?;
            let spec = FIT_SET
                .iter()
                .find(|s| s.kind == FitKind::Flow(variant))
                .expect("every variant has a fit spec");
            vec![spec]
        }
        other => {
            return Err(CliError::Config(format!("closure.kind `{other}` not recognized")));
        }
    };
    Ok(set)
}

/// One row of the distribution-distance evaluation: a checkpoint plus the
/// latent sampler used when simulating it.
#[derive(Debug, Clone, Copy)]
pub struct EvalRow {
    /// Table label, also the artifact stem for per-row outputs.
    pub label: &'static str,
    /// Checkpoint stem this row simulates.
    pub stem: &'static str,
    pub sampler: FlowSampler,
    pub is_flow: bool,
}

/// The thirteen standard evaluation rows, in report order: the three
/// classical closures, then each flow variant under iid and temporally
/// correlated latent sampling.
pub const EVAL_SET: [EvalRow; 13] = [
    EvalRow { label: "deterministic", stem: "deterministic", sampler: FlowSampler::Iid, is_flow: false },
    EvalRow { label: "poly_ar1", stem: "poly_ar1", sampler: FlowSampler::Iid, is_flow: false },
    EvalRow { label: "bayesian", stem: "bayesian", sampler: FlowSampler::Iid, is_flow: false },
    EvalRow { label: "flow_normal_iid", stem: "flow_normal", sampler: FlowSampler::Iid, is_flow: true },
    EvalRow { label: "flow_normal_latent_ar1", stem: "flow_normal", sampler: FlowSampler::LatentAr1, is_flow: true },
    EvalRow { label: "flow_hist1_iid", stem: "flow_hist1", sampler: FlowSampler::Iid, is_flow: true },
    EvalRow { label: "flow_hist2_iid", stem: "flow_hist2", sampler: FlowSampler::Iid, is_flow: true },
    EvalRow { label: "flow_hist1_latent_ar1", stem: "flow_hist1", sampler: FlowSampler::LatentAr1, is_flow: true },
    EvalRow { label: "flow_hist2_latent_ar1", stem: "flow_hist2", sampler: FlowSampler::LatentAr1, is_flow: true },
    EvalRow { label: "flow_base_ar1_iid", stem: "flow_base_ar1", sampler: FlowSampler::Iid, is_flow: true },
    EvalRow { label: "flow_base_ar1_latent_ar1", stem: "flow_base_ar1", sampler: FlowSampler::LatentAr1, is_flow: true },
    EvalRow { label: "flow_tail_iid", stem: "flow_tail", sampler: FlowSampler::Iid, is_flow: true },
    EvalRow { label: "flow_tail_latent_ar1", stem: "flow_tail", sampler: FlowSampler::LatentAr1, is_flow: true },
];

/// Forecast-ensemble model set: label, checkpoint stem, sampler. These are
/// the models whose (i, j, m) cubes feed the variance decomposition and
/// skill stages.
pub const ENSEMBLE_SET: [EvalRow; 4] = [
    EvalRow { label: "deterministic", stem: "deterministic", sampler: FlowSampler::Iid, is_flow: false },
    EvalRow { label: "poly_ar1", stem: "poly_ar1", sampler: FlowSampler::Iid, is_flow: false },
    EvalRow { label: "bayesian", stem: "bayesian", sampler: FlowSampler::Iid, is_flow: false },
    EvalRow { label: "flow_base_ar1_latent_ar1", stem: "flow_base_ar1", sampler: FlowSampler::LatentAr1, is_flow: true },
];

/// Correlation-structure model set (plus truth, handled separately).
pub const CORRELATION_SET: [EvalRow; 5] = [
    EvalRow { label: "deterministic", stem: "deterministic", sampler: FlowSampler::Iid, is_flow: false },
    EvalRow { label: "poly_ar1", stem: "poly_ar1", sampler: FlowSampler::Iid, is_flow: false },
    EvalRow { label: "bayesian", stem: "bayesian", sampler: FlowSampler::Iid, is_flow: false },
    EvalRow { label: "flow_base_ar1_latent_ar1", stem: "flow_base_ar1", sampler: FlowSampler::LatentAr1, is_flow: true },
    EvalRow { label: "flow_normal_iid", stem: "flow_normal", sampler: FlowSampler::Iid, is_flow: true },
];
