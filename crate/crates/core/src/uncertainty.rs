//! Climatological statistics and the decomposition of forecast variance
//! into initial-condition (ensemble) and model components.
//!
//! The decomposition treats each initial state's member block as a two-way
//! (perturbation member j × model realization m) design:
//!
//! - `v_ens`: population variance over j of the model-averaged means,
//! - `v_model`: population variance over m of the member-averaged means,
//! - `interaction`: mean squared double-centered residual,
//! - `v_total`: population variance over all (j, m) members,
//!
//! averaged over initial states. In exact arithmetic
//! `v_total = v_ens + v_model + interaction`. Means are accumulated as
//! shifted deviations from a block anchor so that a closure with *no* model
//! spread (identical m slices) yields `v_model` and `interaction` of exactly
//! 0.0, not merely small numbers.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleCube;
use crate::{Error, Result};

/// Pooled moments of one or more long stationary runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClimatologyStats {
    /// Pooled mean over every (run, time, component) sample.
    pub mean: f64,
    /// Pooled sample standard deviation.
    pub sigma: f64,
    /// Per-component means and standard deviations.
    pub per_k_mean: Vec<f64>,
    pub per_k_sigma: Vec<f64>,
    pub n_runs: usize,
    pub n_samples: usize,
    /// Set when the pooled spread is numerically zero (constant input).
    pub degenerate: bool,
}

impl ClimatologyStats {
    /// Largest relative deviation of a per-component spread from the pooled
    /// spread; a rough spatial-homogeneity diagnostic.
    pub fn spread_homogeneity(&self) -> f64 {
        if self.degenerate {
            return 0.0;
        }
        self.per_k_sigma
            .iter()
            .map(|s| (s - self.sigma).abs() / self.sigma)
            .fold(0.0, f64::max)
    }
}

/// Pooled climatology of a set of `(T, K)` runs (equal widths, lengths may
/// differ). Uses the unbiased (N−1) spread convention.
pub fn climatology(runs: &[Array2<f64>]) -> Result<ClimatologyStats> {
    if runs.is_empty() || runs.iter().any(|r| r.nrows() == 0) {
        return Err(Error::Degenerate("climatology needs at least one nonempty run".into()));
    }
    let k = runs[0].ncols();
    if k == 0 || runs.iter().any(|r| r.ncols() != k) {
        return Err(Error::Misaligned("climatology runs must share component count".into()));
    }
    let mut n = 0usize;
    let mut sum = 0.0;
    for r in runs {
        for &v in r.iter() {
            if !v.is_finite() {
                return Err(Error::InvalidConfig("non-finite climatology sample".into()));
            }
            sum += v;
            n += 1;
        }
    }
    let mean = sum / n as f64;
    let mut ss = 0.0;
    let mut per_k_sum = vec![0.0; k];
    let mut per_k_ss = vec![0.0; k];
    let mut per_k_n = vec![0usize; k];
    for r in runs {
        for row in r.rows() {
            for (d, &v) in row.iter().enumerate() {
                let dev = v - mean;
                ss += dev * dev;
                per_k_sum[d] += v;
                per_k_n[d] += 1;
            }
        }
    }
    let per_k_mean: Vec<f64> = per_k_sum
        .iter()
        .zip(&per_k_n)
        .map(|(s, &c)| s / c as f64)
        .collect();
    for r in runs {
        for row in r.rows() {
            for (d, &v) in row.iter().enumerate() {
                let dev = v - per_k_mean[d];
                per_k_ss[d] += dev * dev;
            }
        }
    }
    let sigma = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
    let per_k_sigma: Vec<f64> = per_k_ss
        .iter()
        .zip(&per_k_n)
        .map(|(s, &c)| if c > 1 { (s / (c - 1) as f64).sqrt() } else { 0.0 })
        .collect();
    Ok(ClimatologyStats {
        mean,
        sigma,
        per_k_mean,
        per_k_sigma,
        n_runs: runs.len(),
        n_samples: n,
        degenerate: sigma < 1e-12,
    })
}

/// Spread across repeated runs from different initial states: the unbiased
/// standard deviation over runs at each (time, component), plus the
/// RMS-over-components summary.
#[derive(Debug, Clone, PartialEq)]
pub struct InternalVariability {
    /// Unbiased std over runs, shaped `(t, k)`.
    pub sigma: Array2<f64>,
    /// `sqrt(mean over k of the variance)` per time.
    pub sigma_avg: Array1<f64>,
    pub n_runs: usize,
}

/// Internal variability of aligned `(T, K)` runs (identical shapes).
pub fn internal_variability(runs: &[Array2<f64>]) -> Result<InternalVariability> {
    if runs.len() < 2 {
        return Err(Error::InvalidConfig(
            "internal variability needs at least two runs".into(),
        ));
    }
    let dim = runs[0].dim();
    if runs.iter().any(|r| r.dim() != dim) {
        return Err(Error::Misaligned("internal-variability runs must share shape".into()));
    }
    let (t_len, k) = dim;
    let n = runs.len() as f64;
    let mut sigma = Array2::zeros((t_len, k));
    let mut sigma_avg = Array1::zeros(t_len);
    for t in 0..t_len {
        let mut var_sum = 0.0;
        for d in 0..k {
            // Shifted accumulation: exact zero for identical runs.
            let anchor = runs[0][[t, d]];
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for r in runs {
                let dev = r[[t, d]] - anchor;
                s1 += dev;
                s2 += dev * dev;
            }
            let var = ((s2 - s1 * s1 / n) / (n - 1.0)).max(0.0);
            sigma[[t, d]] = var.sqrt();
            var_sum += var;
        }
        sigma_avg[t] = (var_sum / k as f64).sqrt();
    }
    Ok(InternalVariability {
        sigma,
        sigma_avg,
        n_runs: runs.len(),
    })
}

/// Forecast-variance decomposition of a separated ensemble cube.
///
/// Population variances per (time, component), averaged over initial
/// states; `sd_*` are the debiased standard deviations
/// (`sd_ens = sqrt(v_ens · J/(J−1))` and so on, with `N = J·M` for the
/// total) used for absolute comparisons against perturbation amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceDecomposition {
    pub times: Vec<f64>,
    pub v_total: Array2<f64>,
    pub v_ens: Array2<f64>,
    pub v_model: Array2<f64>,
    pub interaction: Array2<f64>,
    pub v_total_avg: Array1<f64>,
    pub v_ens_avg: Array1<f64>,
    pub v_model_avg: Array1<f64>,
    pub interaction_avg: Array1<f64>,
    pub sd_total: Array2<f64>,
    pub sd_ens: Array2<f64>,
    pub sd_model: Array2<f64>,
    pub sd_total_avg: Array1<f64>,
    pub sd_ens_avg: Array1<f64>,
    pub sd_model_avg: Array1<f64>,
    /// Mean growth rate of the component-averaged total spread between
    /// forecast times 0 and 2 MTU, when both are on the stored grid.
    pub slope: Option<f64>,
    pub n_init_used: usize,
    pub n_ens: usize,
    pub n_model: usize,
}

/// Mean of `vals` accumulated as deviations from its first element, which
/// keeps the mean of bit-identical values exact.
fn shifted_mean(vals: &[f64]) -> f64 {
    let anchor = vals[0];
    let mut acc = 0.0;
    for &v in vals {
        acc += v - anchor;
    }
    anchor + acc / vals.len() as f64
}

/// Disentangle ensemble (initial-condition) and model variance from a
/// separated cube. Mixed cubes are rejected: a single member pool carries
/// both noise sources at once and cannot be disentangled. Initial states
/// with failed members are excluded.
pub fn decompose(cube: &EnsembleCube) -> Result<VarianceDecomposition> {
    if !cube.is_separated() {
        return Err(Error::UnsupportedLayout(
            "mixed-mode cube: perturbation and model contributions cannot be disentangled; run a separated ensemble".into(),
        ));
    }
    let (n_j, n_m) = (cube.n_ens, cube.n_model);
    if n_j < 2 {
        return Err(Error::InvalidConfig(format!(
            "variance over perturbation members needs n_ens ≥ 2, got {n_j}"
        )));
    }
    if n_m < 2 {
        return Err(Error::InvalidConfig(format!(
            "variance over model realizations needs n_model ≥ 2, got {n_m}"
        )));
    }
    let tainted = cube.tainted_inits();
    let usable: Vec<usize> = (0..cube.n_init()).filter(|i| !tainted.contains(i)).collect();
    if usable.is_empty() {
        return Err(Error::Degenerate("every initial state has failed members".into()));
    }

    let n_t = cube.n_times();
    let kd = cube.k();
    let mut v_total = Array2::zeros((n_t, kd));
    let mut v_ens = Array2::zeros((n_t, kd));
    let mut v_model = Array2::zeros((n_t, kd));
    let mut interaction = Array2::zeros((n_t, kd));

    let mut block = vec![0.0; n_j * n_m];
    let mut row_means = vec![0.0; n_j];
    let mut col_means = vec![0.0; n_m];
    let mut col_scratch = vec![0.0; n_j];

    for &i in &usable {
        for t in 0..n_t {
            for d in 0..kd {
                for j in 0..n_j {
                    for m in 0..n_m {
                        block[j * n_m + m] = cube.value(i, j, m, t, d);
                    }
                }
                for (j, rm) in row_means.iter_mut().enumerate() {
                    *rm = shifted_mean(&block[j * n_m..(j + 1) * n_m]);
                }
                for m in 0..n_m {
                    for j in 0..n_j {
                        col_scratch[j] = block[j * n_m + m];
                    }
                    col_means[m] = shifted_mean(&col_scratch);
                }
                let grand = shifted_mean(&col_means);

                let mut acc_ens = 0.0;
                for &rm in &row_means {
                    let dev = rm - grand;
                    acc_ens += dev * dev;
                }
                let mut acc_model = 0.0;
                for &cm in &col_means {
                    let dev = cm - grand;
                    acc_model += dev * dev;
                }
                let mut acc_inter = 0.0;
                let mut acc_total = 0.0;
                for j in 0..n_j {
                    for m in 0..n_m {
                        let x = block[j * n_m + m];
                        // Grouped so the residual of identical m slices is
                        // exactly (x − rbar) − (cbar − grand) = 0.0 − 0.0.
                        let res = (x - row_means[j]) - (col_means[m] - grand);
                        acc_inter += res * res;
                        let dev = x - grand;
                        acc_total += dev * dev;
                    }
                }
                let jm = (n_j * n_m) as f64;
                v_ens[[t, d]] += acc_ens / n_j as f64;
                v_model[[t, d]] += acc_model / n_m as f64;
                interaction[[t, d]] += acc_inter / jm;
                v_total[[t, d]] += acc_total / jm;
            }
        }
    }
    let n_used = usable.len() as f64;
    v_total /= n_used;
    v_ens /= n_used;
    v_model /= n_used;
    interaction /= n_used;

    let k_mean = |a: &Array2<f64>| -> Array1<f64> {
        a.mean_axis(ndarray::Axis(1)).expect("k ≥ 1")
    };
    let v_total_avg = k_mean(&v_total);
    let v_ens_avg = k_mean(&v_ens);
    let v_model_avg = k_mean(&v_model);
    let interaction_avg = k_mean(&interaction);

    let jm = (n_j * n_m) as f64;
    let debias_total = jm / (jm - 1.0);
    let debias_ens = n_j as f64 / (n_j - 1) as f64;
    let debias_model = n_m as f64 / (n_m - 1) as f64;
    let sd = |a: &Array2<f64>, f: f64| a.mapv(|v| (v * f).sqrt());
    let sd1 = |a: &Array1<f64>, f: f64| a.mapv(|v| (v * f).sqrt());
    let sd_total = sd(&v_total, debias_total);
    let sd_ens = sd(&v_ens, debias_ens);
    let sd_model = sd(&v_model, debias_model);
    let sd_total_avg = sd1(&v_total_avg, debias_total);
    let sd_ens_avg = sd1(&v_ens_avg, debias_ens);
    let sd_model_avg = sd1(&v_model_avg, debias_model);

    let slope = match (
        crate::ensemble::time_index(&cube.times, 0.0),
        crate::ensemble::time_index(&cube.times, 2.0),
    ) {
        (Some(i0), Some(i2)) => Some((sd_total_avg[i2] - sd_total_avg[i0]) / 2.0),
        _ => None,
    };

    Ok(VarianceDecomposition {
        times: cube.times.clone(),
        v_total,
        v_ens,
        v_model,
        interaction,
        v_total_avg,
        v_ens_avg,
        v_model_avg,
        interaction_avg,
        sd_total,
        sd_ens,
        sd_model,
        sd_total_avg,
        sd_ens_avg,
        sd_model_avg,
        slope,
        n_init_used: usable.len(),
        n_ens: n_j,
        n_model: n_m,
    })
}

/// Total member spread and ensemble mean of any cube (mixed or separated):
/// population variance over all members per (time, component), averaged
/// over initial states, with the RMS-over-components summary.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalSpread {
    pub times: Vec<f64>,
    pub v_total: Array2<f64>,
    pub sigma_avg: Array1<f64>,
    /// Ensemble mean averaged over initial states, `(t, k)`.
    pub mean: Array2<f64>,
    pub mean_avg: Array1<f64>,
    pub n_init_used: usize,
}

pub fn total_spread(cube: &EnsembleCube) -> Result<TotalSpread> {
    let n_b = cube.n_members();
    if n_b < 2 {
        return Err(Error::InvalidConfig("total spread needs ≥ 2 members".into()));
    }
    let tainted = cube.tainted_inits();
    let usable: Vec<usize> = (0..cube.n_init()).filter(|i| !tainted.contains(i)).collect();
    if usable.is_empty() {
        return Err(Error::Degenerate("every initial state has failed members".into()));
    }
    let n_t = cube.n_times();
    let kd = cube.k();
    let mut v_total = Array2::zeros((n_t, kd));
    let mut mean = Array2::zeros((n_t, kd));
    for &i in &usable {
        for t in 0..n_t {
            for d in 0..kd {
                let anchor = cube.data[[i, 0, t, d]];
                let mut s1 = 0.0;
                let mut s2 = 0.0;
                for b in 0..n_b {
                    let dev = cube.data[[i, b, t, d]] - anchor;
                    s1 += dev;
                    s2 += dev * dev;
                }
                let n = n_b as f64;
                v_total[[t, d]] += ((s2 - s1 * s1 / n) / n).max(0.0);
                mean[[t, d]] += anchor + s1 / n;
            }
        }
    }
    let n_used = usable.len() as f64;
    v_total /= n_used;
    mean /= n_used;
    let sigma_avg = v_total
        .mean_axis(ndarray::Axis(1))
        .expect("k ≥ 1")
        .mapv(f64::sqrt);
    let mean_avg = mean.mean_axis(ndarray::Axis(1)).expect("k ≥ 1");
    Ok(TotalSpread {
        times: cube.times.clone(),
        v_total,
        sigma_avg,
        mean,
        mean_avg,
        n_init_used: usable.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{EnsembleMode, MemberFailure};
    use crate::seed::NoiseStream;
    use ndarray::{Array3, Array4};
    use proptest::prelude::*;

    fn make_cube(data: Array4<f64>, n_ens: usize, n_model: usize, mode: EnsembleMode) -> EnsembleCube {
        let (n_i, _b, n_t, k) = data.dim();
        EnsembleCube {
            truth: Array3::zeros((n_i, n_t, k)),
            times: (0..n_t).map(|t| t as f64).collect(),
            n_ens,
            n_model,
            mode,
            pert_std: 0.1,
            sigma_clim: 5.0,
            seed: 0,
            closure_kind: "test".into(),
            sampler_name: "iid".into(),
            failures: vec![],
            data,
        }
    }

    /// Independent plain-arithmetic reimplementation of the two-way
    /// decomposition, used as the oracle.
    fn brute_force(cube: &EnsembleCube, i: usize, t: usize, d: usize) -> (f64, f64, f64, f64) {
        let (j_n, m_n) = (cube.n_ens, cube.n_model);
        let mut grand = 0.0;
        for j in 0..j_n {
            for m in 0..m_n {
                grand += cube.value(i, j, m, t, d);
            }
        }
        grand /= (j_n * m_n) as f64;
        let row_mean: Vec<f64> = (0..j_n)
            .map(|j| (0..m_n).map(|m| cube.value(i, j, m, t, d)).sum::<f64>() / m_n as f64)
            .collect();
        let col_mean: Vec<f64> = (0..m_n)
            .map(|m| (0..j_n).map(|j| cube.value(i, j, m, t, d)).sum::<f64>() / j_n as f64)
            .collect();
        let v_ens = row_mean.iter().map(|r| (r - grand) * (r - grand)).sum::<f64>() / j_n as f64;
        let v_model = col_mean.iter().map(|c| (c - grand) * (c - grand)).sum::<f64>() / m_n as f64;
        let mut inter = 0.0;
        let mut total = 0.0;
        for j in 0..j_n {
            for m in 0..m_n {
                let x = cube.value(i, j, m, t, d);
                let r = x - row_mean[j] - col_mean[m] + grand;
                inter += r * r;
                total += (x - grand) * (x - grand);
            }
        }
        let jm = (j_n * m_n) as f64;
        (total / jm, v_ens, v_model, inter / jm)
    }

    #[test]
    fn climatology_pooled_moments() {
        // Two runs, hand-computable: values {0,2} and {4,6}.
        let a = Array2::from_shape_vec((2, 1), vec![0.0, 2.0]).unwrap();
        let b = Array2::from_shape_vec((2, 1), vec![4.0, 6.0]).unwrap();
        let c = climatology(&[a, b]).unwrap();
        assert_eq!(c.mean, 3.0);
        // Sample variance of {0,2,4,6} is 20/3.
        assert!((c.sigma - (20.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(c.n_samples, 4);
        assert!(!c.degenerate);
    }

    #[test]
    fn climatology_constant_is_degenerate() {
        let a = Array2::from_elem((100, 4), 1.5);
        let c = climatology(&[a]).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.mean, 1.5);
        assert_eq!(c.sigma, 0.0);
    }

    #[test]
    fn internal_variability_identical_runs_is_exactly_zero() {
        let mut noise = NoiseStream::from_seed(1);
        let run = Array2::from_shape_fn((50, 8), |_| noise.standard_normal());
        let iv = internal_variability(&[run.clone(), run.clone(), run]).unwrap();
        assert!(iv.sigma.iter().all(|&v| v == 0.0));
        assert!(iv.sigma_avg.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn internal_variability_two_run_oracle() {
        let a = Array2::from_elem((1, 2), 1.0);
        let b = Array2::from_elem((1, 2), 3.0);
        let iv = internal_variability(&[a, b]).unwrap();
        // Unbiased variance of {1, 3} is 2 → std √2.
        assert!((iv.sigma[[0, 0]] - 2.0f64.sqrt()).abs() < 1e-12);
        assert!((iv.sigma_avg[0] - 2.0f64.sqrt()).abs() < 1e-12);
        assert!(internal_variability(&[Array2::<f64>::zeros((1, 2))]).is_err());
    }

    #[test]
    fn decompose_identical_members_is_exactly_zero() {
        let data = Array4::from_elem((2, 6, 3, 4), 2.6180339);
        let cube = make_cube(data, 2, 3, EnsembleMode::Separated);
        let d = decompose(&cube).unwrap();
        assert!(d.v_total.iter().all(|&v| v == 0.0));
        assert!(d.v_ens.iter().all(|&v| v == 0.0));
        assert!(d.v_model.iter().all(|&v| v == 0.0));
        assert!(d.interaction.iter().all(|&v| v == 0.0));
    }

    /// Identical model slices (a deterministic closure) must give exactly
    /// 0.0 model variance and interaction, not merely small values.
    #[test]
    fn decompose_duplicated_model_slices_bitwise_zero() {
        let mut noise = NoiseStream::from_seed(8);
        let (n_i, n_j, n_m, n_t, k) = (3, 4, 5, 2, 8);
        let mut data = Array4::zeros((n_i, n_j * n_m, n_t, k));
        for i in 0..n_i {
            for j in 0..n_j {
                let vals: Vec<f64> = (0..n_t * k).map(|_| noise.normal(1.0, 3.0)).collect();
                for m in 0..n_m {
                    for t in 0..n_t {
                        for d in 0..k {
                            data[[i, j * n_m + m, t, d]] = vals[t * k + d];
                        }
                    }
                }
            }
        }
        let cube = make_cube(data, n_j, n_m, EnsembleMode::Separated);
        let dec = decompose(&cube).unwrap();
        assert!(dec.v_model.iter().all(|&v| v == 0.0), "v_model not exactly zero");
        assert!(dec.interaction.iter().all(|&v| v == 0.0), "interaction not exactly zero");
        assert!(dec.sd_model.iter().all(|&v| v == 0.0));
        // And the identity still holds against the nonzero pieces.
        for t in 0..n_t {
            for d in 0..k {
                let lhs = dec.v_total[[t, d]];
                let rhs = dec.v_ens[[t, d]];
                assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1e-300));
            }
        }
    }

    /// Purely additive member effects leave no interaction.
    #[test]
    fn decompose_additive_cube_has_no_interaction() {
        let mut noise = NoiseStream::from_seed(21);
        let (n_j, n_m, k) = (6, 5, 3);
        let a: Vec<f64> = (0..n_j).map(|_| noise.standard_normal()).collect();
        let b: Vec<f64> = (0..n_m).map(|_| noise.standard_normal()).collect();
        let mut data = Array4::zeros((1, n_j * n_m, 1, k));
        for j in 0..n_j {
            for m in 0..n_m {
                for d in 0..k {
                    data[[0, j * n_m + m, 0, d]] = 10.0 + a[j] + b[m];
                }
            }
        }
        let cube = make_cube(data, n_j, n_m, EnsembleMode::Separated);
        let dec = decompose(&cube).unwrap();
        for d in 0..k {
            assert!(dec.interaction[[0, d]] < 1e-10 * dec.v_total[[0, d]]);
        }
    }

    #[test]
    fn decompose_matches_brute_force_on_random_cube() {
        let mut noise = NoiseStream::from_seed(33);
        let (n_i, n_j, n_m, n_t, k) = (2, 5, 4, 3, 2);
        let data = Array4::from_shape_fn((n_i, n_j * n_m, n_t, k), |_| noise.normal(2.0, 1.5));
        let cube = make_cube(data, n_j, n_m, EnsembleMode::Separated);
        let dec = decompose(&cube).unwrap();
        for t in 0..n_t {
            for d in 0..k {
                let mut expect = (0.0, 0.0, 0.0, 0.0);
                for i in 0..n_i {
                    let (vt, ve, vm, vi) = brute_force(&cube, i, t, d);
                    expect.0 += vt;
                    expect.1 += ve;
                    expect.2 += vm;
                    expect.3 += vi;
                }
                let n = n_i as f64;
                assert!((dec.v_total[[t, d]] - expect.0 / n).abs() < 1e-12);
                assert!((dec.v_ens[[t, d]] - expect.1 / n).abs() < 1e-12);
                assert!((dec.v_model[[t, d]] - expect.2 / n).abs() < 1e-12);
                assert!((dec.interaction[[t, d]] - expect.3 / n).abs() < 1e-12);
                // Exact additivity.
                let sum = dec.v_ens[[t, d]] + dec.v_model[[t, d]] + dec.interaction[[t, d]];
                assert!((dec.v_total[[t, d]] - sum).abs() <= 1e-10 * dec.v_total[[t, d]]);
            }
        }
    }

    #[test]
    fn decompose_rejects_bad_layouts() {
        let data = Array4::zeros((1, 4, 1, 2));
        let cube = make_cube(data.clone(), 4, 1, EnsembleMode::MixedIndependent);
        assert!(matches!(decompose(&cube), Err(Error::UnsupportedLayout(_))));
        let cube = make_cube(data.clone(), 4, 1, EnsembleMode::Separated);
        assert!(matches!(decompose(&cube), Err(Error::InvalidConfig(_))));
        let cube = make_cube(data, 1, 4, EnsembleMode::Separated);
        assert!(matches!(decompose(&cube), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn decompose_skips_tainted_initial_states() {
        let mut noise = NoiseStream::from_seed(4);
        let mut data = Array4::from_shape_fn((2, 4, 2, 2), |_| noise.standard_normal());
        // Poison i = 0 as a failed member would.
        for t in 0..2 {
            for d in 0..2 {
                data[[0, 3, t, d]] = f64::NAN;
            }
        }
        let mut cube = make_cube(data, 2, 2, EnsembleMode::Separated);
        cube.failures.push(MemberFailure {
            init: 0,
            ens: 1,
            model: 1,
            time: 0.0,
        });
        let dec = decompose(&cube).unwrap();
        assert_eq!(dec.n_init_used, 1);
        assert!(dec.v_total.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn slope_reads_the_stored_grid() {
        let mut noise = NoiseStream::from_seed(6);
        let data = Array4::from_shape_fn((1, 4, 3, 2), |_| noise.standard_normal());
        let mut cube = make_cube(data, 2, 2, EnsembleMode::Separated);
        cube.times = vec![0.0, 1.0, 2.0];
        let dec = decompose(&cube).unwrap();
        let expect = (dec.sd_total_avg[2] - dec.sd_total_avg[0]) / 2.0;
        assert_eq!(dec.slope.unwrap(), expect);
        cube.times = vec![0.0, 1.0, 3.0];
        let dec = decompose(&cube).unwrap();
        assert!(dec.slope.is_none());
    }

    #[test]
    fn total_spread_two_member_oracle() {
        let mut data = Array4::zeros((3, 2, 2, 4));
        for i in 0..3 {
            for t in 0..2 {
                for d in 0..4 {
                    data[[i, 0, t, d]] = 1.0 - 0.4;
                    data[[i, 1, t, d]] = 1.0 + 0.4;
                }
            }
        }
        let cube = make_cube(data, 2, 1, EnsembleMode::MixedIndependent);
        let ts = total_spread(&cube).unwrap();
        assert!((ts.sigma_avg[0] - 0.4).abs() < 1e-12);
        assert!((ts.mean_avg[0] - 1.0).abs() < 1e-12);
    }

    proptest! {
        /// The additivity identity holds on random cubes to 1e-10 relative.
        #[test]
        fn decomposition_identity_random(seed in 0u64..2000) {
            let mut noise = NoiseStream::from_seed(seed);
            let n_j = 2 + (seed % 4) as usize;
            let n_m = 2 + (seed % 3) as usize;
            let data = Array4::from_shape_fn((1, n_j * n_m, 1, 2), |_| noise.normal(0.0, 4.0));
            let cube = make_cube(data, n_j, n_m, EnsembleMode::Separated);
            let dec = decompose(&cube).unwrap();
            for d in 0..2 {
                let sum = dec.v_ens[[0, d]] + dec.v_model[[0, d]] + dec.interaction[[0, d]];
                let vt = dec.v_total[[0, d]];
                prop_assert!((vt - sum).abs() <= 1e-10 * vt.abs().max(1e-30));
            }
        }
    }
}
