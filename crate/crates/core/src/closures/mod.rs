//! Subgrid closures: the common closure interface and the classical
//! parameterization families (deterministic cubic, polynomial + AR(1)
//! residual, Bayesian polynomial regression). Flow-based closures live in
//! [`crate::flows`] and plug into the same interface.

mod ar1;
mod bayes;
mod cubic;

pub use ar1::{ar1_step, fit_ar1, Ar1Closure, Ar1Params};
pub use bayes::{fit_bayesian_posterior, BayesPosterior, BayesianClosure, NigPrior};
pub use cubic::{eval_cubic, fit_cubic_lsq, CubicCoeffs, DeterministicClosure};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::flows::{FlowCheckpoint, FlowSampler};
use crate::Result;

/// A (possibly stochastic) map from the resolved state to the parameterized
/// subgrid tendency `U_p`.
///
/// The reduced model subtracts `U_p` from the resolved advection; a closure
/// instance owns its noise stream and any temporal state (AR(1) residuals,
/// latent variables, state history), so one instance drives exactly one
/// trajectory at a time.
pub trait Closure: Send {
    /// Subgrid tendency for resolved state `x` at reduced-model step `step`
    /// (one call per step; stochastic closures advance their noise here).
    fn subgrid_into(&mut self, x: &[f64], step: usize, out: &mut [f64]);

    /// Clear temporal state and reseed the noise stream: after `reset(s)`,
    /// an identical evaluation sequence reproduces identical outputs.
    fn reset(&mut self, seed: u64);

    /// Redraw whatever defines a "model realization" for this closure
    /// (posterior coefficient draw for the Bayesian family). Path-stochastic
    /// closures realize the model through their path noise instead, so the
    /// default is a no-op.
    fn draw_model(&mut self, _seed: u64) {}

    /// Whether distinct noise seeds can produce distinct trajectories.
    fn is_stochastic(&self) -> bool;

    fn clone_box(&self) -> Box<dyn Closure>;
}

impl Clone for Box<dyn Closure> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

/// A bank of closure instances advanced in lockstep, one per ensemble
/// member, so batch-friendly closures (flows) can evaluate all members with
/// one set of matrix products per step.
pub trait ClosureBank: Send {
    /// Number of member slots.
    fn members(&self) -> usize;

    /// Subgrid tendencies for all members: row `b` of `states` is member
    /// `b`'s resolved state, row `b` of `out` receives its tendency.
    fn subgrid_batch(&mut self, states: &Array2<f64>, step: usize, out: &mut Array2<f64>);

    /// Reseed member `b`'s noise stream and clear its temporal state.
    fn reset_member(&mut self, b: usize, seed: u64);

    /// Redraw member `b`'s model realization (see [`Closure::draw_model`]).
    fn draw_model_member(&mut self, b: usize, seed: u64);
}

/// Generic bank: independent closure instances evaluated member-by-member.
pub struct SerialBank {
    closures: Vec<Box<dyn Closure>>,
}

impl SerialBank {
    /// A bank of `members` clones of `prototype`.
    pub fn new(prototype: &dyn Closure, members: usize) -> Self {
        Self {
            closures: (0..members).map(|_| prototype.clone_box()).collect(),
        }
    }
}

impl ClosureBank for SerialBank {
    fn members(&self) -> usize {
        self.closures.len()
    }

    fn subgrid_batch(&mut self, states: &Array2<f64>, step: usize, out: &mut Array2<f64>) {
        for (b, closure) in self.closures.iter_mut().enumerate() {
            let x = states.row(b);
            let mut u = out.row_mut(b);
            closure.subgrid_into(
                x.as_slice().expect("contiguous row"),
                step,
                u.as_slice_mut().expect("contiguous row"),
            );
        }
    }

    fn reset_member(&mut self, b: usize, seed: u64) {
        self.closures[b].reset(seed);
    }

    fn draw_model_member(&mut self, b: usize, seed: u64) {
        self.closures[b].draw_model(seed);
    }
}

/// Serialized closure: kind tag, parameters, and fit provenance.
// Variants differ greatly in size, but checkpoints are few and long-lived,
// so boxing the flow weights would buy nothing.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Checkpoint {
    Deterministic {
        coeffs: CubicCoeffs,
        residual_std: f64,
        dataset_sha256: String,
    },
    PolyAr1 {
        coeffs: CubicCoeffs,
        ar1: Ar1Params,
        dataset_sha256: String,
    },
    Bayesian {
        posterior: BayesPosterior,
        dataset_sha256: String,
    },
    Flow(FlowCheckpoint),
}

impl Checkpoint {
    /// Build a fresh closure instance. `sampler` selects iid vs temporally
    /// correlated latent sampling and only affects flow checkpoints.
    pub fn closure(&self, sampler: FlowSampler) -> Result<Box<dyn Closure>> {
        match self {
            Checkpoint::Deterministic { coeffs, .. } => {
                Ok(Box::new(DeterministicClosure::new(*coeffs)))
            }
            Checkpoint::PolyAr1 { coeffs, ar1, .. } => {
                Ok(Box::new(Ar1Closure::new(*coeffs, *ar1)))
            }
            Checkpoint::Bayesian { posterior, .. } => {
                Ok(Box::new(BayesianClosure::at_posterior_mean(posterior.clone())?))
            }
            Checkpoint::Flow(ck) => Ok(Box::new(ck.closure(sampler)?)),
        }
    }

    /// Build a closure bank with `members` slots (batched for flows).
    pub fn bank(&self, sampler: FlowSampler, members: usize) -> Result<Box<dyn ClosureBank>> {
        match self {
            Checkpoint::Flow(ck) => Ok(Box::new(ck.bank(sampler, members)?)),
            other => {
                let proto = other.closure(sampler)?;
                Ok(Box::new(SerialBank::new(proto.as_ref(), members)))
            }
        }
    }

    /// Whether the closure family has any stochastic degrees of freedom.
    pub fn is_stochastic(&self) -> bool {
        !matches!(self, Checkpoint::Deterministic { .. })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Checkpoint::Deterministic { .. } => "deterministic",
            Checkpoint::PolyAr1 { .. } => "poly_ar1",
            Checkpoint::Bayesian { .. } => "bayesian",
            Checkpoint::Flow(_) => "flow",
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
