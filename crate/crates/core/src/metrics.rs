//! Forecast-verification and stationary-distribution metrics: histogram
//! (Hellinger) and Kolmogorov–Smirnov distances for climatologies, ensemble
//! divergence and skill diagnostics (APD, RMSE, ANCR, RMS spread, the
//! finite-ensemble spread–error consistency distance), and temporal /
//! spatio-temporal correlation functions.

use ndarray::{Array1, Array2, Array3, Array4, Axis};

use crate::{Error, Result};

/// Binned distribution: strictly increasing edges and per-bin probability
/// masses summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    edges: Vec<f64>,
    masses: Vec<f64>,
}

impl Histogram {
    /// Histogram over `n_bins` uniform bins spanning `[lo, hi]`.
    pub fn from_samples_with_range(samples: &[f64], n_bins: usize, lo: f64, hi: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::TooShort { needed: 1, got: 0 });
        }
        if n_bins == 0 || lo.is_nan() || hi.is_nan() || hi <= lo {
            return Err(Error::InvalidConfig("need n_bins ≥ 1 and hi > lo".into()));
        }
        let width = (hi - lo) / n_bins as f64;
        let mut counts = vec![0u64; n_bins];
        let mut total = 0u64;
        for &v in samples {
            if !v.is_finite() {
                return Err(Error::InvalidConfig("non-finite sample in histogram input".into()));
            }
            if v < lo || v > hi {
                continue;
            }
            let mut b = ((v - lo) / width) as usize;
            if b >= n_bins {
                b = n_bins - 1; // v == hi lands in the last bin
            }
            counts[b] += 1;
            total += 1;
        }
        if total == 0 {
            return Err(Error::Degenerate("no samples fall inside the histogram range".into()));
        }
        let edges = (0..=n_bins).map(|i| lo + i as f64 * width).collect();
        let masses = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(Self { edges, masses })
    }

    /// Histogram over `n_bins` uniform bins spanning the sample min/max.
    pub fn from_samples(samples: &[f64], n_bins: usize) -> Result<Self> {
        let (lo, hi) = min_max(samples)?;
        let hi = if hi > lo { hi } else { lo + 1.0 };
        Self::from_samples_with_range(samples, n_bins, lo, hi)
    }

    /// Two histograms on shared edges spanning the pooled min/max, as
    /// required for comparing distributions.
    pub fn shared_pair(a: &[f64], b: &[f64], n_bins: usize) -> Result<(Self, Self)> {
        let (lo_a, hi_a) = min_max(a)?;
        let (lo_b, hi_b) = min_max(b)?;
        let lo = lo_a.min(lo_b);
        let mut hi = hi_a.max(hi_b);
        if hi <= lo {
            hi = lo + 1.0;
        }
        Ok((
            Self::from_samples_with_range(a, n_bins, lo, hi)?,
            Self::from_samples_with_range(b, n_bins, lo, hi)?,
        ))
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn widths(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }
}

fn min_max(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in samples {
        if !v.is_finite() {
            return Err(Error::InvalidConfig("non-finite sample".into()));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok((lo, hi))
}

/// Hellinger distance between two histograms on shared edges. Masses are
/// normalized to densities (mass per unit width) so that
/// `H = sqrt(½ Σ_b (√p_b − √q_b)² Δx_b)` is the discretization of the
/// density-integral form and lies in [0, 1].
pub fn hellinger(p: &Histogram, q: &Histogram) -> Result<f64> {
    if p.edges != q.edges {
        return Err(Error::MismatchedEdges(
            "histograms must share bin edges".into(),
        ));
    }
    let mut acc = 0.0;
    for ((&mp, &mq), w) in p.masses.iter().zip(&q.masses).zip(p.widths()) {
        let dp = (mp / w).sqrt();
        let dq = (mq / w).sqrt();
        acc += (dp - dq) * (dp - dq) * w;
    }
    Ok((0.5 * acc).sqrt().min(1.0))
}

/// Two-sample Kolmogorov–Smirnov statistic: the supremum distance between
/// empirical CDFs, by a sorted merge walk.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).expect("finite samples"));
    sb.sort_by(|x, y| x.partial_cmp(y).expect("finite samples"));
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < sa.len() && j < sb.len() {
        let x = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= x {
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Average pairwise distance: mean over initial states of the mean
/// pairwise K-dim Euclidean distance between members, per time.
/// `data` is shaped `(i, member, t, k)`.
pub fn apd(data: &Array4<f64>) -> Result<Array1<f64>> {
    let (n_i, n_m, n_t, _k) = data.dim();
    if n_m < 2 {
        return Err(Error::InvalidConfig("pairwise distance needs ≥ 2 members".into()));
    }
    let pairs = (n_m * (n_m - 1) / 2) as f64;
    let mut out = Array1::zeros(n_t);
    for t in 0..n_t {
        let mut acc_i = 0.0;
        for i in 0..n_i {
            let mut acc = 0.0;
            for a in 0..n_m {
                for b in a + 1..n_m {
                    let mut d2 = 0.0;
                    for k in 0.._k {
                        let diff = data[[i, a, t, k]] - data[[i, b, t, k]];
                        d2 += diff * diff;
                    }
                    acc += d2.sqrt();
                }
            }
            acc_i += acc / pairs;
        }
        out[t] = acc_i / n_i as f64;
    }
    Ok(out)
}

/// State-space RMSE of the ensemble mean against truth, per time:
/// `sqrt(mean over (i,k) of (X̄_i,k − X^true_i,k)²)`.
/// `data` shaped `(i, member, t, k)`, `truth` shaped `(i, t, k)`.
pub fn rmse(data: &Array4<f64>, truth: &Array3<f64>) -> Result<Array1<f64>> {
    let (n_i, _n_m, n_t, k) = data.dim();
    if truth.dim() != (n_i, n_t, k) {
        return Err(Error::Misaligned(format!(
            "truth shape {:?} does not match ensemble {:?}",
            truth.dim(),
            data.dim()
        )));
    }
    let means = data.mean_axis(Axis(1)).expect("members ≥ 1");
    let mut out = Array1::zeros(n_t);
    for t in 0..n_t {
        let mut acc = 0.0;
        for i in 0..n_i {
            for d in 0..k {
                let e = means[[i, t, d]] - truth[[i, t, d]];
                acc += e * e;
            }
        }
        out[t] = (acc / (n_i * k) as f64).sqrt();
    }
    Ok(out)
}

/// Anomaly correlation: mean over initial states of the cosine similarity
/// between ensemble-mean and truth anomalies relative to the scalar
/// climatological mean. Returns the per-time series and the number of
/// (i, t) pairs excluded for zero-norm anomalies.
pub fn ancr(data: &Array4<f64>, truth: &Array3<f64>, clim_mean: f64) -> Result<(Array1<f64>, usize)> {
    let (n_i, _n_m, n_t, k) = data.dim();
    if truth.dim() != (n_i, n_t, k) {
        return Err(Error::Misaligned(format!(
            "truth shape {:?} does not match ensemble {:?}",
            truth.dim(),
            data.dim()
        )));
    }
    let means = data.mean_axis(Axis(1)).expect("members ≥ 1");
    let mut out = Array1::zeros(n_t);
    let mut excluded = 0usize;
    for t in 0..n_t {
        let mut acc = 0.0;
        let mut used = 0usize;
        for i in 0..n_i {
            let mut dot = 0.0;
            let mut na = 0.0;
            let mut nb = 0.0;
            for d in 0..k {
                let am = means[[i, t, d]] - clim_mean;
                let at = truth[[i, t, d]] - clim_mean;
                dot += am * at;
                na += am * am;
                nb += at * at;
            }
            if na <= 0.0 || nb <= 0.0 {
                excluded += 1;
                continue;
            }
            acc += dot / (na.sqrt() * nb.sqrt());
            used += 1;
        }
        out[t] = if used > 0 { acc / used as f64 } else { f64::NAN };
    }
    Ok((out, excluded))
}

/// RMS ensemble spread per time: `sqrt(mean over (i,k) of Var_member)`,
/// population variance over members.
pub fn rms_spread(data: &Array4<f64>) -> Result<Array1<f64>> {
    let (n_i, n_m, n_t, k) = data.dim();
    if n_m < 2 {
        return Err(Error::InvalidConfig("spread needs ≥ 2 members".into()));
    }
    let mut out = Array1::zeros(n_t);
    for t in 0..n_t {
        let mut acc = 0.0;
        for i in 0..n_i {
            for d in 0..k {
                // Shifted accumulation keeps identical members at exactly 0.
                let first = data[[i, 0, t, d]];
                let mut s1 = 0.0;
                let mut s2 = 0.0;
                for m in 0..n_m {
                    let dev = data[[i, m, t, d]] - first;
                    s1 += dev;
                    s2 += dev * dev;
                }
                let n = n_m as f64;
                acc += (s2 - s1 * s1 / n) / n;
            }
        }
        out[t] = (acc / (n_i * k) as f64).max(0.0).sqrt();
    }
    Ok(out)
}

/// Signed distance to the finite-ensemble spread–error consistency line
/// `N/(N−1)·spread = N/(N+1)·rmse`; zero on the line, negative when the
/// ensemble is underdispersive.
pub fn consistency_distance(rmse: f64, spread: f64, n_ens: usize) -> Result<f64> {
    if n_ens < 2 {
        return Err(Error::InvalidConfig("consistency distance needs N ≥ 2".into()));
    }
    let n = n_ens as f64;
    Ok(n / (n - 1.0) * spread - n / (n + 1.0) * rmse)
}

/// Sample autocorrelation with `1/(T−τ)` covariance normalization and the
/// full-sample variance denominator, for lags `0..=max_lag`.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let t_len = series.len();
    if t_len <= max_lag {
        return Err(Error::TooShort { needed: max_lag + 1, got: t_len });
    }
    let mean = series.iter().sum::<f64>() / t_len as f64;
    let var = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t_len as f64;
    if var < 1e-14 {
        return Err(Error::ZeroVariance { context: "autocorrelation" });
    }
    let mut out = Vec::with_capacity(max_lag + 1);
    for lag in 0..=max_lag {
        let mut acc = 0.0;
        for t in 0..t_len - lag {
            acc += (series[t] - mean) * (series[t + lag] - mean);
        }
        out.push(acc / (t_len - lag) as f64 / var);
    }
    Ok(out)
}

/// Sample cross-correlation of `a` at time t with `b` at time t+τ, same
/// normalization conventions as [`acf`].
pub fn ccf(a: &[f64], b: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Misaligned(format!(
            "cross-correlation inputs of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let t_len = a.len();
    if t_len <= max_lag {
        return Err(Error::TooShort { needed: max_lag + 1, got: t_len });
    }
    let mean_a = a.iter().sum::<f64>() / t_len as f64;
    let mean_b = b.iter().sum::<f64>() / t_len as f64;
    let var_a = a.iter().map(|v| (v - mean_a) * (v - mean_a)).sum::<f64>() / t_len as f64;
    let var_b = b.iter().map(|v| (v - mean_b) * (v - mean_b)).sum::<f64>() / t_len as f64;
    if var_a < 1e-14 || var_b < 1e-14 {
        return Err(Error::ZeroVariance { context: "cross-correlation" });
    }
    let norm = (var_a * var_b).sqrt();
    let mut out = Vec::with_capacity(max_lag + 1);
    for lag in 0..=max_lag {
        let mut acc = 0.0;
        for t in 0..t_len - lag {
            acc += (a[t] - mean_a) * (b[t + lag] - mean_b);
        }
        out.push(acc / (t_len - lag) as f64 / norm);
    }
    Ok(out)
}

/// Per-component ACF of a `(T, K)` field plus the component average.
pub fn acf_field(x: &Array2<f64>, max_lag: usize) -> Result<(Array2<f64>, Vec<f64>)> {
    let k = x.ncols();
    let mut per_k = Array2::zeros((max_lag + 1, k));
    for d in 0..k {
        let col: Vec<f64> = x.column(d).to_vec();
        let vals = acf(&col, max_lag)?;
        for (lag, v) in vals.iter().enumerate() {
            per_k[[lag, d]] = *v;
        }
    }
    let avg = per_k.mean_axis(Axis(1)).expect("k ≥ 1").to_vec();
    Ok((per_k, avg))
}

/// Per-component CCF of each component with its eastern neighbor (cyclic):
/// component k+1 at time t against component k at time t+τ, so that a
/// westward-propagating pattern yields a positive-lag extremum.
pub fn ccf_field(x: &Array2<f64>, max_lag: usize) -> Result<(Array2<f64>, Vec<f64>)> {
    let k = x.ncols();
    let mut per_k = Array2::zeros((max_lag + 1, k));
    for d in 0..k {
        let east: Vec<f64> = x.column((d + 1) % k).to_vec();
        let here: Vec<f64> = x.column(d).to_vec();
        let vals = ccf(&east, &here, max_lag)?;
        for (lag, v) in vals.iter().enumerate() {
            per_k[[lag, d]] = *v;
        }
    }
    let avg = per_k.mean_axis(Axis(1)).expect("k ≥ 1").to_vec();
    Ok((per_k, avg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::NoiseStream;
    use proptest::prelude::*;

    #[test]
    fn histogram_masses_sum_to_one() {
        let samples: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let h = Histogram::from_samples(&samples, 100).unwrap();
        assert!((h.total_mass() - 1.0).abs() < 1e-12);
        assert_eq!(h.masses().len(), 100);
        assert_eq!(h.edges().len(), 101);
    }

    #[test]
    fn hellinger_trivial_cases() {
        let a: Vec<f64> = (0..500).map(|i| i as f64 / 500.0).collect();
        let b: Vec<f64> = (0..500).map(|i| 10.0 + i as f64 / 500.0).collect();
        let (p, q) = Histogram::shared_pair(&a, &a, 50).unwrap();
        assert_eq!(hellinger(&p, &q).unwrap(), 0.0);
        // Disjoint supports → 1.
        let (p, q) = Histogram::shared_pair(&a, &b, 50).unwrap();
        assert!((hellinger(&p, &q).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hellinger_mismatched_edges_rejected() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let p = Histogram::from_samples_with_range(&a, 10, 0.0, 100.0).unwrap();
        let q = Histogram::from_samples_with_range(&a, 10, 0.0, 101.0).unwrap();
        assert!(matches!(hellinger(&p, &q), Err(Error::MismatchedEdges(_))));
    }

    /// Analytic oracle: H² between N(0,1) and N(1,1) is 1 − exp(−1/8).
    /// Histograms are built from exact Gaussian bin masses on a fine grid.
    #[test]
    fn hellinger_matches_gaussian_closed_form() {
        use statrs::distribution::{ContinuousCDF, Normal};
        let n_bins = 2000;
        let (lo, hi) = (-10.0, 11.0);
        let width = (hi - lo) / n_bins as f64;
        let g0 = Normal::new(0.0, 1.0).unwrap();
        let g1 = Normal::new(1.0, 1.0).unwrap();
        let edges: Vec<f64> = (0..=n_bins).map(|i| lo + i as f64 * width).collect();
        let masses = |g: &Normal| -> Vec<f64> {
            let raw: Vec<f64> = edges.windows(2).map(|w| g.cdf(w[1]) - g.cdf(w[0])).collect();
            let total: f64 = raw.iter().sum();
            raw.iter().map(|m| m / total).collect()
        };
        let masses0 = masses(&g0);
        let masses1 = masses(&g1);
        let p = Histogram { edges: edges.clone(), masses: masses0 };
        let q = Histogram { edges, masses: masses1 };
        let h = hellinger(&p, &q).unwrap();
        let expect = (1.0 - (-1.0f64 / 8.0).exp()).sqrt();
        assert!((h - expect).abs() < 1e-3, "{h} vs {expect}");
    }

    #[test]
    fn ks_identical_is_zero() {
        let a: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        assert_eq!(ks_statistic(&a, &a).unwrap(), 0.0);
    }

    /// Analytic overlap oracle: U(0,1) vs U(0.5,1.5) has KS = 0.5.
    #[test]
    fn ks_uniform_offset_is_half() {
        let mut noise = NoiseStream::from_seed(11);
        let n = 200_000;
        let a: Vec<f64> = (0..n).map(|_| noise.uniform()).collect();
        let b: Vec<f64> = (0..n).map(|_| 0.5 + noise.uniform()).collect();
        let d = ks_statistic(&a, &b).unwrap();
        assert!((d - 0.5).abs() < 0.02, "{d}");
    }

    #[test]
    fn apd_trivial_and_brute_force() {
        // Two members differing by a fixed vector v → |v|₂.
        let mut data = Array4::zeros((1, 2, 1, 3));
        for (k, v) in [3.0, 4.0, 12.0].iter().enumerate() {
            data[[0, 1, 0, k]] = *v;
        }
        let d = apd(&data).unwrap();
        assert!((d[0] - 13.0).abs() < 1e-12);

        // Three-member case vs brute-force pair enumeration.
        let mut noise = NoiseStream::from_seed(3);
        let mut data = Array4::zeros((2, 3, 2, 4));
        for v in data.iter_mut() {
            *v = noise.standard_normal();
        }
        let d = apd(&data).unwrap();
        for t in 0..2 {
            let mut acc_i = 0.0;
            for i in 0..2 {
                let mut acc = 0.0;
                let mut pairs = 0.0;
                for a in 0..3 {
                    for b in 0..3 {
                        if b <= a {
                            continue;
                        }
                        let mut d2 = 0.0;
                        for k in 0..4 {
                            let diff = data[[i, a, t, k]] - data[[i, b, t, k]];
                            d2 += diff * diff;
                        }
                        acc += d2.sqrt();
                        pairs += 1.0;
                    }
                }
                acc_i += acc / pairs;
            }
            assert!((d[t] - acc_i / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rmse_constant_offset() {
        let mut data = Array4::zeros((3, 5, 2, 8));
        let truth = Array3::zeros((3, 2, 8));
        data += 0.7;
        let r = rmse(&data, &truth).unwrap();
        for t in 0..2 {
            assert!((r[t] - 0.7).abs() < 1e-12);
        }
        // Perfect mean → 0.
        let r = rmse(&Array4::zeros((3, 5, 2, 8)), &truth).unwrap();
        assert_eq!(r[0], 0.0);
    }

    #[test]
    fn ancr_alignment_cases() {
        let k = 8;
        let clim = 2.0;
        // Truth anomaly: e0-ish vector; aligned, anti-aligned, orthogonal.
        let mut truth = Array3::from_elem((1, 3, k), clim);
        truth[[0, 0, 0]] += 1.5;
        truth[[0, 1, 0]] += 1.5;
        truth[[0, 2, 0]] += 1.5;
        let mut data = Array4::from_elem((1, 1, 3, k), clim);
        data[[0, 0, 0, 0]] += 3.0; // aligned
        data[[0, 0, 1, 0]] -= 3.0; // anti-aligned
        data[[0, 0, 2, 1]] += 3.0; // orthogonal
        let (a, excluded) = ancr(&data, &truth, clim).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-12);
        assert!((a[1] + 1.0).abs() < 1e-12);
        assert!(a[2].abs() < 1e-12);
        assert_eq!(excluded, 0);
    }

    #[test]
    fn ancr_zero_norm_excluded() {
        let truth = Array3::zeros((2, 1, 4)); // zero anomaly for clim 0
        let mut data = Array4::zeros((2, 1, 1, 4));
        data[[0, 0, 0, 0]] = 1.0;
        let (_, excluded) = ancr(&data, &truth, 0.0).unwrap();
        assert_eq!(excluded, 2);
    }

    #[test]
    fn spread_two_point_case() {
        let mut data = Array4::zeros((4, 2, 2, 8));
        for i in 0..4 {
            for t in 0..2 {
                for k in 0..8 {
                    data[[i, 0, t, k]] = 1.0 - 0.25;
                    data[[i, 1, t, k]] = 1.0 + 0.25;
                }
            }
        }
        let s = rms_spread(&data).unwrap();
        assert!((s[0] - 0.25).abs() < 1e-12);
        // Identical members → exactly 0.
        let s = rms_spread(&Array4::from_elem((4, 3, 1, 8), 0.123)).unwrap();
        assert_eq!(s[0], 0.0);
    }

    #[test]
    fn consistency_distance_cases() {
        let n = 10;
        // Choose spread to sit exactly on the consistency line.
        let rmse_v = 1.3;
        let spread = rmse_v * (10.0 / 11.0) * (9.0 / 10.0);
        let d = consistency_distance(rmse_v, spread, n).unwrap();
        assert!(d.abs() < 1e-12);
        let d = consistency_distance(1.0, 0.0, n).unwrap();
        assert!(d < 0.0);
    }

    /// AR(1) autocorrelation oracle: acf(τ) ≈ ρ^τ.
    #[test]
    fn acf_recovers_ar1_decay() {
        let rho: f64 = 0.8;
        let mut noise = NoiseStream::from_seed(17);
        let n = 1_000_000;
        let mut x = vec![0.0; n];
        let scale = (1.0 - rho * rho).sqrt();
        for t in 1..n {
            x[t] = rho * x[t - 1] + scale * noise.standard_normal();
        }
        let vals = acf(&x, 10).unwrap();
        assert_eq!(vals[0], 1.0);
        for (lag, v) in vals.iter().enumerate() {
            assert!(
                (v - rho.powi(lag as i32)).abs() < 0.02,
                "lag {lag}: {v} vs {}",
                rho.powi(lag as i32)
            );
        }
    }

    /// Cross-check against an independent direct implementation.
    #[test]
    fn acf_matches_direct_reimplementation() {
        let mut noise = NoiseStream::from_seed(23);
        let x: Vec<f64> = (0..2000).map(|_| noise.standard_normal()).collect();
        let vals = acf(&x, 50).unwrap();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / x.len() as f64;
        for lag in 0..=50 {
            let mut acc = 0.0;
            let mut count = 0.0;
            for t in 0..x.len() {
                if t + lag < x.len() {
                    acc += (x[t] - mean) * (x[t + lag] - mean);
                    count += 1.0;
                }
            }
            let direct = acc / count / var;
            assert!((vals[lag] - direct).abs() < 1e-10);
        }
    }

    /// A shifted copy peaks at exactly the shift lag.
    #[test]
    fn ccf_detects_known_shift() {
        let mut noise = NoiseStream::from_seed(29);
        let n = 50_000;
        let shift = 3usize;
        let mut a = vec![0.0; n + shift];
        for t in 1..n + shift {
            a[t] = 0.9 * a[t - 1] + noise.standard_normal();
        }
        let early: Vec<f64> = a[..n].to_vec();
        let late: Vec<f64> = a[shift..shift + n].to_vec();
        // late[t] = early[t + shift]: correlating early with late needs the
        // late series to run ahead by `shift`.
        let vals = ccf(&late, &early, 10).unwrap();
        let best = vals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(best, shift);
        assert!(vals[shift] > 0.99);
    }

    #[test]
    fn acf_zero_variance_rejected() {
        let x = vec![1.0; 100];
        assert!(matches!(acf(&x, 5), Err(Error::ZeroVariance { .. })));
    }

    proptest! {
        /// Masses always sum to 1 and Hellinger is symmetric and bounded.
        #[test]
        fn hellinger_symmetry_and_bounds(seed in 0u64..5000) {
            let mut noise = NoiseStream::from_seed(seed);
            let a: Vec<f64> = (0..300).map(|_| noise.standard_normal()).collect();
            let b: Vec<f64> = (0..300).map(|_| 0.5 + 1.5 * noise.standard_normal()).collect();
            let (p, q) = Histogram::shared_pair(&a, &b, 40).unwrap();
            prop_assert!((p.total_mass() - 1.0).abs() < 1e-12);
            prop_assert!((q.total_mass() - 1.0).abs() < 1e-12);
            let h_pq = hellinger(&p, &q).unwrap();
            let h_qp = hellinger(&q, &p).unwrap();
            prop_assert!((h_pq - h_qp).abs() < 1e-14);
            prop_assert!((0.0..=1.0).contains(&h_pq));
        }

        /// KS lies in [0, 1] and is zero for identical samples.
        #[test]
        fn ks_bounds(seed in 0u64..5000) {
            let mut noise = NoiseStream::from_seed(seed);
            let a: Vec<f64> = (0..200).map(|_| noise.standard_normal()).collect();
            let b: Vec<f64> = (0..150).map(|_| noise.standard_normal()).collect();
            let d = ks_statistic(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
        }
    }
}
