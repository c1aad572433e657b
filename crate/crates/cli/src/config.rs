//! Experiment configuration: one structured file drives every subcommand.
//!
//! TOML is the native format; JSON is accepted interchangeably (the two
//! deserialize into the same structure). Committed presets live under
//! `presets/`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use l96ens::dynamics::{IntegratorConfig, L96Params};
use l96ens::flows::{FlowConfig, FlowVariant};

use crate::error::{CliError, CliResult};

/// Dataset generation: number of resolved-state samples and the
/// chronological split applied to the diagnosed tendency rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub n_samples: usize,
    pub train: usize,
    pub val: usize,
}

/// Closure selection for the `fit` subcommand: a single family, or the
/// whole standard set.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosureSection {
    /// `all`, `deterministic`, `poly_ar1`, `bayesian`, or `flow`.
    pub kind: String,
    /// Flow variant when `kind = "flow"`: `normal`, `hist1`, `hist2`,
    /// `base_ar1`, or `tail`.
    #[serde(default)]
    pub variant: Option<String>,
}

/// Flow architecture and training hyperparameters, shared by all variants.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    pub n_coupling: usize,
    pub hidden: usize,
    pub depth: usize,
    pub s_cap: f64,
    pub lr: f64,
    pub batch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seq_len: usize,
}

/// Harvest of on-attractor initial states shared by the ensemble-style
/// experiments.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatesSection {
    pub spin_up_mtu: f64,
    pub spacing_mtu: f64,
    pub n_states: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClimatologySection {
    /// Independent long runs per model (truth and non-flow closures).
    pub runs: usize,
    /// Duration of each such run.
    pub mtu: f64,
    /// Shared histogram bins for distribution distances.
    pub n_bins: usize,
    /// Flow closures run as a lockstep bank of this many members...
    pub flow_members: usize,
    /// ...each integrated this long (the pooled sample count matches the
    /// non-flow runs when `flow_members · flow_mtu = runs · mtu`).
    pub flow_mtu: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InternalVariabilitySection {
    pub horizon_mtu: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivitySection {
    pub n_ens: usize,
    pub pert_frac: f64,
    pub horizon_mtu: f64,
    pub store_stride: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub n_init: usize,
    pub n_ens: usize,
    pub n_model: usize,
    pub pert_frac: f64,
    pub horizon_mtu: f64,
    pub store_stride: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationsSection {
    /// Length of each model's stationary run.
    pub mtu: f64,
    /// Largest lag reported.
    pub max_lag_mtu: f64,
    /// Flow runs are banked, like the climatology stage.
    pub flow_members: usize,
    pub flow_mtu: f64,
}

/// The full experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every random stream in every stage derives from it.
    pub seed: u64,
    pub params: L96Params,
    pub integrator: IntegratorConfig,
    pub dataset: DatasetSection,
    pub closure: ClosureSection,
    pub flow: FlowSection,
    pub states: StatesSection,
    pub climatology: ClimatologySection,
    pub internal_variability: InternalVariabilitySection,
    pub sensitivity: SensitivitySection,
    pub ensemble: EnsembleSection,
    pub correlations: CorrelationsSection,
}

impl ExperimentConfig {
    /// Parse a TOML (or, interchangeably, JSON) configuration file.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: Self = if looks_like_json(&text) {
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("bad JSON config {}: {e}", path.display())))?
        } else {
            toml::from_str(&text)
                .map_err(|e| CliError::Config(format!("bad TOML config {}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.params.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.integrator.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.dataset.n_samples < 2 {
            return Err(CliError::Config("dataset.n_samples must be ≥ 2".into()));
        }
        if self.dataset.train + self.dataset.val >= self.dataset.n_samples - 1 {
            return Err(CliError::Config(
                "dataset train+val splits leave no test rows".into(),
            ));
        }
        match self.closure.kind.as_str() {
            "all" | "deterministic" | "poly_ar1" | "bayesian" => {}
            "flow" => {
                let v = self.closure.variant.as_deref().unwrap_or("");
                parse_variant(v)?;
            }
            other => {
                return Err(CliError::Config(format!(
                    "closure.kind `{other}` is not one of all|deterministic|poly_ar1|bayesian|flow"
                )));
            }
        }
        if self.states.n_states == 0 || self.states.spacing_mtu <= 0.0 || self.states.spin_up_mtu <= 0.0 {
            return Err(CliError::Config("states section must be positive".into()));
        }
        if self.climatology.runs == 0
            || self.climatology.mtu <= 0.0
            || self.climatology.n_bins < 2
            || self.climatology.flow_members == 0
            || self.climatology.flow_mtu <= 0.0
        {
            return Err(CliError::Config("climatology section must be positive".into()));
        }
        if self.internal_variability.horizon_mtu <= 0.0 {
            return Err(CliError::Config("internal_variability.horizon_mtu must be positive".into()));
        }
        if self.sensitivity.n_ens < 2 || self.sensitivity.horizon_mtu <= 0.0 || self.sensitivity.store_stride == 0 {
            return Err(CliError::Config("sensitivity section must have ≥ 2 members and positive horizon/stride".into()));
        }
        if self.ensemble.n_init == 0
            || self.ensemble.n_ens < 2
            || self.ensemble.n_model < 2
            || self.ensemble.horizon_mtu <= 0.0
            || self.ensemble.store_stride == 0
        {
            return Err(CliError::Config(
                "ensemble section needs n_init ≥ 1, n_ens ≥ 2, n_model ≥ 2, positive horizon/stride".into(),
            ));
        }
        if self.ensemble.n_init > self.states.n_states {
            return Err(CliError::Config(format!(
                "ensemble.n_init = {} exceeds states.n_states = {}",
                self.ensemble.n_init, self.states.n_states
            )));
        }
        if self.correlations.mtu <= 0.0
            || self.correlations.max_lag_mtu <= 0.0
            || self.correlations.flow_members == 0
            || self.correlations.flow_mtu <= 0.0
        {
            return Err(CliError::Config("correlations section must be positive".into()));
        }
        if self.correlations.max_lag_mtu >= self.correlations.flow_mtu
            || self.correlations.max_lag_mtu >= self.correlations.mtu
        {
            return Err(CliError::Config("correlations.max_lag_mtu must be shorter than the runs".into()));
        }
        if self.flow.n_coupling == 0 || self.flow.hidden == 0 || self.flow.depth == 0 {
            return Err(CliError::Config("flow architecture must be positive".into()));
        }
        Ok(())
    }

    /// The flow architecture/training configuration for one variant.
    pub fn flow_config(&self, variant: FlowVariant) -> FlowConfig {
        FlowConfig {
            k: self.params.k,
            variant,
            n_coupling: self.flow.n_coupling,
            hidden: self.flow.hidden,
            depth: self.flow.depth,
            s_cap: self.flow.s_cap,
            lr: self.flow.lr,
            batch: self.flow.batch,
            max_epochs: self.flow.max_epochs,
            patience: self.flow.patience,
            seq_len: self.flow.seq_len,
        }
    }

    /// Serialize the resolved configuration (after flag overrides) as TOML.
    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string_pretty(self).map_err(|e| CliError::Config(format!("config serialization: {e}")))
    }
}

fn looks_like_json(text: &str) -> bool {
    text.trim_start().starts_with('{')
}

/// Parse a flow-variant name as used in configs and artifact labels.
pub fn parse_variant(name: &str) -> CliResult<FlowVariant> {
    match name {
        "normal" => Ok(FlowVariant::Normal),
        "hist1" => Ok(FlowVariant::History { tau: 1 }),
        "hist2" => Ok(FlowVariant::History { tau: 2 }),
        "base_ar1" => Ok(FlowVariant::BaseAr1),
        "tail" => Ok(FlowVariant::Tail),
        other => Err(CliError::Config(format!(
            "unknown flow variant `{other}` (expected normal|hist1|hist2|base_ar1|tail)"
        ))),
    }
}

