//! Subgrid-tendency diagnosis and the training dataset built from it.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use ndarray::{Array2, ArrayView2, s};
use serde::{Deserialize, Serialize};

use super::{integrate_full, spin_up, IntegratorConfig, L96Params, Record, Trajectory};
use crate::error::Error;
use crate::seed::{derive, Role};
use crate::Result;

/// Contiguous train/validation/test split along the time axis.
///
/// Chronological (not shuffled) splitting keeps the validation and test
/// blocks out of the training block's temporal neighborhood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitSizes {
    /// Split `rows` into `train`, `val`, and the remainder as test.
    pub fn new(train: usize, val: usize, rows: usize) -> Result<Self> {
        if train == 0 {
            return Err(Error::InvalidConfig("training split must be non-empty".into()));
        }
        if train + val > rows {
            return Err(Error::InvalidConfig(format!(
                "split sizes {train}+{val} exceed {rows} available rows"
            )));
        }
        Ok(Self {
            train,
            val,
            test: rows - train - val,
        })
    }

    pub fn rows(&self) -> usize {
        self.train + self.val + self.test
    }
}

/// Which block of the chronological split to address.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetSplit {
    Train,
    Val,
    Test,
}

/// Pairs of resolved states and diagnosed subgrid tendencies on a uniform
/// time grid, with a chronological split.
#[derive(Debug, Clone, PartialEq)]
pub struct TendencyDataset {
    /// `(rows, K)` resolved states.
    pub x: Array2<f64>,
    /// `(rows, K)` diagnosed subgrid tendencies, aligned with `x`.
    pub u: Array2<f64>,
    /// Sampling/diagnosis interval.
    pub dt: f64,
    pub split: SplitSizes,
}

impl TendencyDataset {
    pub fn rows(&self) -> usize {
        self.x.nrows()
    }

    /// Number of resolved components.
    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    /// Row range of a split block.
    pub fn range(&self, split: DatasetSplit) -> Range<usize> {
        let s = &self.split;
        match split {
            DatasetSplit::Train => 0..s.train,
            DatasetSplit::Val => s.train..s.train + s.val,
            DatasetSplit::Test => s.train + s.val..s.rows(),
        }
    }

    pub fn x_block(&self, split: DatasetSplit) -> ArrayView2<'_, f64> {
        let r = self.range(split);
        self.x.slice(s![r.start..r.end, ..])
    }

    pub fn u_block(&self, split: DatasetSplit) -> ArrayView2<'_, f64> {
        let r = self.range(split);
        self.u.slice(s![r.start..r.end, ..])
    }

    /// Flatten a block into pooled `(x, u)` pairs across all components:
    /// the system is statistically homogeneous in `k`, so closures are fit
    /// on the pooled scatter.
    pub fn pooled(&self, split: DatasetSplit) -> (Vec<f64>, Vec<f64>) {
        let xb = self.x_block(split);
        let ub = self.u_block(split);
        let mut xs = Vec::with_capacity(xb.len());
        let mut us = Vec::with_capacity(ub.len());
        for (xr, ur) in xb.rows().into_iter().zip(ub.rows()) {
            xs.extend(xr.iter().copied());
            us.extend(ur.iter().copied());
        }
        (xs, us)
    }

    /// Serialize as CSV: header `t,x0..x{K-1},u0..u{K-1}`, one row per
    /// sample, floats in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let k = self.k();
        let mut out = String::new();
        out.push('t');
        for i in 0..k {
            let _ = write!(out, ",x{i}");
        }
        for i in 0..k {
            let _ = write!(out, ",u{i}");
        }
        out.push('\n');
        for row in 0..self.rows() {
            let _ = write!(out, "{}", row as f64 * self.dt);
            for i in 0..k {
                let _ = write!(out, ",{}", self.x[[row, i]]);
            }
            for i in 0..k {
                let _ = write!(out, ",{}", self.u[[row, i]]);
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Parse the CSV form; the split must be supplied by the caller (it is
    /// carried in the dataset's JSON sidecar, not the table).
    pub fn read_csv(path: &Path, dt: f64, split: SplitSizes) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::CsvParse("empty dataset file".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 3 || !(cols.len() - 1).is_multiple_of(2) {
            return Err(Error::CsvParse(format!("unexpected header {header:?}")));
        }
        let k = (cols.len() - 1) / 2;
        let mut xs = Vec::new();
        let mut us = Vec::new();
        let mut rows = 0usize;
        for (ln, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 1 + 2 * k {
                return Err(Error::CsvParse(format!(
                    "row {} has {} fields, expected {}",
                    ln + 2,
                    fields.len(),
                    1 + 2 * k
                )));
            }
            for (i, f) in fields.iter().enumerate().skip(1) {
                let v: f64 = f
                    .parse()
                    .map_err(|_| Error::CsvParse(format!("bad float {f:?} in row {}", ln + 2)))?;
                if i <= k {
                    xs.push(v);
                } else {
                    us.push(v);
                }
            }
            rows += 1;
        }
        if rows != split.rows() {
            return Err(Error::Misaligned(format!(
                "dataset has {rows} rows but split describes {}",
                split.rows()
            )));
        }
        let x = Array2::from_shape_vec((rows, k), xs).expect("shape checked");
        let u = Array2::from_shape_vec((rows, k), us).expect("shape checked");
        Ok(Self { x, u, dt, split })
    }

    /// Content hash of the canonical CSV serialization.
    pub fn sha256_hex(&self) -> String {
        crate::io::sha256_hex(self.to_csv().as_bytes())
    }
}

/// Diagnose aggregated subgrid tendencies from a resolved trajectory.
///
/// For each sample `t` and component `k`,
/// `U_k(t) = -X_{k-1}(X_{k-2} - X_{k+1}) - X_k + F - (X_k(t+Δt) - X_k(t))/Δt`
/// with `Δt` the trajectory's sampling interval (forward difference). The
/// last row has no successor, so a trajectory with `n` rows yields `n - 1`
/// diagnosed samples.
pub fn diagnose_subgrid_tendency(p: &L96Params, traj: &Trajectory) -> Result<(Array2<f64>, Array2<f64>)> {
    let kd = p.k;
    if traj.states.ncols() < kd {
        return Err(Error::Misaligned(format!(
            "trajectory width {} is smaller than K = {kd}",
            traj.states.ncols()
        )));
    }
    if traj.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: traj.len(),
        });
    }
    let rows = traj.len() - 1;
    let mut x_out = Array2::zeros((rows, kd));
    let mut u_out = Array2::zeros((rows, kd));
    let inv_dt = 1.0 / traj.dt;
    for t in 0..rows {
        let x = traj.states.row(t);
        let x_next = traj.states.row(t + 1);
        for k in 0..kd {
            let km1 = if k == 0 { kd - 1 } else { k - 1 };
            let km2 = if k < 2 { k + kd - 2 } else { k - 2 };
            let kp1 = if k + 1 == kd { 0 } else { k + 1 };
            let resolved = -x[km1] * (x[km2] - x[kp1]) - x[k] + p.f;
            let ddt = (x_next[k] - x[k]) * inv_dt;
            x_out[[t, k]] = x[k];
            u_out[[t, k]] = resolved - ddt;
        }
    }
    Ok((x_out, u_out))
}

/// Generate the closure-training dataset: spin up, integrate the coupled
/// system for `n_samples` output samples, and diagnose tendencies.
///
/// `n_samples` resolved states yield `n_samples - 1` diagnosed rows; the
/// chronological split takes `train` and `val` rows from the front and
/// leaves the remainder as test.
pub fn build_training_dataset(
    p: &L96Params,
    cfg: &IntegratorConfig,
    seed: u64,
    n_samples: usize,
    train: usize,
    val: usize,
) -> Result<TendencyDataset> {
    if n_samples < 2 {
        return Err(Error::InvalidConfig("need at least 2 samples to diagnose tendencies".into()));
    }
    let spun = spin_up(p, cfg, derive(seed, Role::SpinUp, &[]), 20.0)?;
    let horizon = (n_samples - 1) as f64 * cfg.dt_out;
    let traj = integrate_full(p, cfg, &spun, horizon, Record::LargeScale)?;
    debug_assert_eq!(traj.len(), n_samples);
    let (x, u) = diagnose_subgrid_tendency(p, &traj)?;
    let split = SplitSizes::new(train, val, x.nrows())?;
    Ok(TendencyDataset { x, u, dt: cfg.dt_out, split })
}
