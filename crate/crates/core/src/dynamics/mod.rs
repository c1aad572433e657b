//! Two-scale Lorenz '96 dynamics: the fully resolved (coupled) system, the
//! reduced single-scale system driven by a subgrid closure, and the
//! diagnosis of subgrid tendencies used to train closures.

mod dataset;
mod full;
mod reduced;

pub use dataset::{
    build_training_dataset, diagnose_subgrid_tendency, DatasetSplit, SplitSizes, TendencyDataset,
};
pub use full::{advance_full, full_tendency_into, integrate_full, spin_up, Record};
pub use reduced::{advection_into, integrate_reduced, integrate_reduced_bank};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Parameters of the two-scale system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L96Params {
    /// Number of large-scale variables.
    pub k: usize,
    /// Number of small-scale variables per large-scale variable.
    pub j: usize,
    /// Coupling strength.
    pub h: f64,
    /// Spatial-scale ratio.
    pub b: f64,
    /// Temporal-scale ratio.
    pub c: f64,
    /// Constant forcing.
    pub f: f64,
}

impl Default for L96Params {
    /// The standard configuration: K = 8, J = 32, h = 1, b = c = 10, F = 20.
    fn default() -> Self {
        Self {
            k: 8,
            j: 32,
            h: 1.0,
            b: 10.0,
            c: 10.0,
            f: 20.0,
        }
    }
}

impl L96Params {
    /// Validate structural constraints.
    ///
    /// The advection stencil spans two neighbors on either side, so fewer
    /// than four large-scale variables would make the cyclic indices
    /// collide; `b` divides the coupling term and must be nonzero.
    pub fn validate(&self) -> Result<()> {
        if self.k < 4 {
            return Err(Error::InvalidConfig(format!(
                "need at least 4 large-scale variables, got {}",
                self.k
            )));
        }
        if self.j < 1 {
            return Err(Error::InvalidConfig("need at least 1 small-scale variable per block".into()));
        }
        if self.b == 0.0 {
            return Err(Error::InvalidConfig("spatial-scale ratio b must be nonzero".into()));
        }
        for (name, v) in [("h", self.h), ("b", self.b), ("c", self.c), ("F", self.f)] {
            if !v.is_finite() {
                return Err(Error::InvalidConfig(format!("parameter {name} is not finite")));
            }
        }
        Ok(())
    }

    /// Number of small-scale variables.
    pub fn n_small(&self) -> usize {
        self.k * self.j
    }

    /// Packed state width: large-scale block followed by small-scale block.
    pub fn full_width(&self) -> usize {
        self.k + self.n_small()
    }
}

/// Time stepping and output sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// Inner step of the fully resolved integration (classical Runge–Kutta).
    pub dt_full: f64,
    /// Step of the reduced integration (Heun's method); one closure sample
    /// is drawn per step and held fixed across both stages.
    pub dt_reduced: f64,
    /// Output sampling interval; must be an integer multiple of `dt_full`
    /// and of `dt_reduced`.
    pub dt_out: f64,
    /// A trajectory whose max |component| exceeds this threshold is
    /// declared diverged.
    pub blowup_threshold: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt_full: 0.001,
            dt_reduced: 0.005,
            dt_out: 0.005,
            blowup_threshold: 1e6,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dt_full", self.dt_full),
            ("dt_reduced", self.dt_reduced),
            ("dt_out", self.dt_out),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive and finite")));
            }
        }
        if !self.blowup_threshold.is_finite() || self.blowup_threshold <= 0.0 {
            return Err(Error::InvalidConfig("blow-up threshold must be positive".into()));
        }
        steps_per_output(self.dt_out, self.dt_full)?;
        steps_per_output(self.dt_out, self.dt_reduced)?;
        Ok(())
    }
}

/// Integer ratio `dt_out / dt_inner`, rejecting non-commensurate pairs.
pub(crate) fn steps_per_output(dt_out: f64, dt_inner: f64) -> Result<usize> {
    let ratio = dt_out / dt_inner;
    let rounded = ratio.round();
    if rounded < 1.0 || (ratio - rounded).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::InvalidConfig(format!(
            "output interval {dt_out} is not an integer multiple of step {dt_inner}"
        )));
    }
    Ok(rounded as usize)
}

/// Number of output steps covering `horizon`, rejecting non-commensurate pairs.
pub fn output_steps(horizon: f64, dt_out: f64) -> Result<usize> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidConfig("horizon must be positive and finite".into()));
    }
    let ratio = horizon / dt_out;
    let rounded = ratio.round();
    if rounded < 1.0 || (ratio - rounded).abs() > 1e-6 * ratio.max(1.0) {
        return Err(Error::InvalidConfig(format!(
            "horizon {horizon} is not an integer multiple of the output interval {dt_out}"
        )));
    }
    Ok(rounded as usize)
}

/// A uniformly sampled trajectory. Row `i` holds the state at
/// `t0 + i * dt`; columns are state components (for full-system recordings:
/// the large-scale block, optionally followed by the small-scale block).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Time of the first row.
    pub t0: f64,
    /// Sampling interval between rows.
    pub dt: f64,
    /// `(n_rows, width)` state table.
    pub states: Array2<f64>,
}

impl Trajectory {
    /// Number of rows.
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }

    /// Time of row `i`.
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    /// All row times.
    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }
}

/// Reject states containing NaN or infinities.
pub(crate) fn check_finite(state: &[f64], time: f64) -> Result<()> {
    if state.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidState { time })
    }
}

/// Detect blow-up: non-finite values or magnitudes beyond the threshold.
pub(crate) fn check_blowup(state: &[f64], time: f64, threshold: f64) -> Result<()> {
    let mut max_abs: f64 = 0.0;
    for &v in state {
        if !v.is_finite() {
            return Err(Error::Divergence {
                time,
                max_abs: f64::INFINITY,
            });
        }
        max_abs = max_abs.max(v.abs());
    }
    if max_abs > threshold {
        return Err(Error::Divergence { time, max_abs });
    }
    Ok(())
}
