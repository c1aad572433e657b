//! Polynomial + AR(1) residual closure: the cubic mean tendency plus a
//! temporally correlated stochastic residual per component,
//! `e_{k,t} = ρ e_{k,t−1} + σ_e √(1−ρ²) z_{k,t}`.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{eval_cubic, Closure, CubicCoeffs};
use crate::error::Error;
use crate::seed::NoiseStream;
use crate::Result;

/// AR(1) residual parameters: `rho` is the lag-1 autocorrelation, `sigma_e`
/// the stationary standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ar1Params {
    pub rho: f64,
    pub sigma_e: f64,
}

impl Ar1Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho.is_finite() && self.rho.abs() < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "AR(1) coefficient must lie in (-1, 1), got {}",
                self.rho
            )));
        }
        if !(self.sigma_e.is_finite() && self.sigma_e >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "AR(1) stationary std must be non-negative, got {}",
                self.sigma_e
            )));
        }
        Ok(())
    }
}

/// Estimate AR(1) parameters from residual series pooled across components.
///
/// `residuals` is `(T, K)` time-major; `rho` is the pooled lag-1 sample
/// autocorrelation (no cross-component lag products), `sigma_e` the pooled
/// sample standard deviation. Pooling follows from the statistical
/// equivalence of the components.
pub fn fit_ar1(residuals: ArrayView2<'_, f64>) -> Result<Ar1Params> {
    let t_len = residuals.nrows();
    let k_len = residuals.ncols();
    if t_len < 3 {
        return Err(Error::TooShort { needed: 3, got: t_len });
    }
    let n = (t_len * k_len) as f64;
    let mean = residuals.iter().sum::<f64>() / n;

    let mut var_sum = 0.0;
    let mut lag_sum = 0.0;
    let mut lag_norm = 0.0;
    for k in 0..k_len {
        let col = residuals.column(k);
        let mut prev = col[0] - mean;
        var_sum += prev * prev;
        for t in 1..t_len {
            let cur = col[t] - mean;
            var_sum += cur * cur;
            lag_sum += prev * cur;
            lag_norm += prev * prev;
            prev = cur;
        }
    }
    if var_sum / n < 1e-12 {
        return Err(Error::ZeroVariance { context: "AR(1) residual fit" });
    }
    let rho = lag_sum / lag_norm;
    let sigma_e = (var_sum / (n - 1.0)).sqrt();
    let params = Ar1Params { rho, sigma_e };
    params.validate()?;
    Ok(params)
}

/// One AR(1) update per component with independent standard normals.
pub fn ar1_step(e_prev: &mut [f64], params: &Ar1Params, noise: &mut NoiseStream) {
    let innov = params.sigma_e * (1.0 - params.rho * params.rho).sqrt();
    for e in e_prev.iter_mut() {
        *e = params.rho * *e + innov * noise.standard_normal();
    }
}

/// The polynomial + AR(1) closure.
///
/// The residual starts stationary (`e₀ ~ N(0, σ_e²)` drawn on the first
/// step after a reset) and advances once per reduced-model step.
#[derive(Debug, Clone)]
pub struct Ar1Closure {
    coeffs: CubicCoeffs,
    params: Ar1Params,
    e: Vec<f64>,
    started: bool,
    noise: NoiseStream,
}

impl Ar1Closure {
    pub fn new(coeffs: CubicCoeffs, params: Ar1Params) -> Self {
        Self {
            coeffs,
            params,
            e: Vec::new(),
            started: false,
            noise: NoiseStream::from_seed(0),
        }
    }
}

impl Closure for Ar1Closure {
    fn subgrid_into(&mut self, x: &[f64], _step: usize, out: &mut [f64]) {
        if self.e.len() != x.len() {
            self.e = vec![0.0; x.len()];
            self.started = false;
        }
        if !self.started {
            for e in self.e.iter_mut() {
                *e = self.params.sigma_e * self.noise.standard_normal();
            }
            self.started = true;
        } else {
            ar1_step(&mut self.e, &self.params, &mut self.noise);
        }
        for (k, (o, &xi)) in out.iter_mut().zip(x).enumerate() {
            *o = eval_cubic(&self.coeffs, xi) + self.e[k];
        }
    }

    fn reset(&mut self, seed: u64) {
        self.noise = NoiseStream::from_seed(seed);
        self.started = false;
        self.e.iter_mut().for_each(|e| *e = 0.0);
    }

    fn is_stochastic(&self) -> bool {
        true
    }

    fn clone_box(&self) -> Box<dyn Closure> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn simulate_ar1(rho: f64, sigma: f64, t_len: usize, seed: u64) -> Vec<f64> {
        let mut noise = NoiseStream::from_seed(seed);
        let mut out = Vec::with_capacity(t_len);
        let mut e = sigma * noise.standard_normal();
        out.push(e);
        let innov = sigma * (1.0 - rho * rho).sqrt();
        for _ in 1..t_len {
            e = rho * e + innov * noise.standard_normal();
            out.push(e);
        }
        out
    }

    #[test]
    fn recovers_simulated_parameters() {
        let t_len = 100_000;
        let series = simulate_ar1(0.9, 1.0, t_len, 42);
        let arr = Array2::from_shape_vec((t_len, 1), series).unwrap();
        let fit = fit_ar1(arr.view()).unwrap();
        assert!((fit.rho - 0.9).abs() < 0.02, "rho = {}", fit.rho);
        assert!((fit.sigma_e - 1.0).abs() < 0.02, "sigma_e = {}", fit.sigma_e);
    }

    #[test]
    fn white_noise_has_no_persistence() {
        let t_len = 50_000;
        let series = simulate_ar1(0.0, 1.0, t_len, 7);
        let arr = Array2::from_shape_vec((t_len, 1), series).unwrap();
        let fit = fit_ar1(arr.view()).unwrap();
        assert!(fit.rho.abs() < 3.0 / (t_len as f64).sqrt(), "rho = {}", fit.rho);
    }

    #[test]
    fn zero_variance_errors() {
        let arr = Array2::from_elem((100, 2), 3.25);
        assert!(matches!(
            fit_ar1(arr.view()),
            Err(Error::ZeroVariance { .. })
        ));
    }

    #[test]
    fn step_degenerate_cases() {
        let mut noise = NoiseStream::from_seed(1);
        // rho = 0: pure white noise with std sigma_e.
        let p = Ar1Params { rho: 0.0, sigma_e: 2.0 };
        let mut e = vec![5.0, -3.0];
        ar1_step(&mut e, &p, &mut noise);
        // values replaced entirely by fresh draws, scaled by sigma_e
        assert!(e.iter().all(|v| v.abs() < 20.0));

        // sigma_e = 0: deterministic decay.
        let p = Ar1Params { rho: 0.5, sigma_e: 0.0 };
        let mut e = vec![4.0];
        ar1_step(&mut e, &p, &mut noise);
        assert_eq!(e[0], 2.0);
    }

    #[test]
    fn stationary_variance_matches_sigma() {
        let t_len = 1_000_000;
        let series = simulate_ar1(0.8, 1.5, t_len, 11);
        let mean = series.iter().sum::<f64>() / t_len as f64;
        let var = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (t_len as f64 - 1.0);
        assert!((var / (1.5 * 1.5) - 1.0).abs() < 0.02, "var = {var}");
    }

    #[test]
    fn closure_reset_reproduces() {
        let coeffs = CubicCoeffs { a: 0.0, b: 0.0, c: 0.0, d: 0.0 };
        let params = Ar1Params { rho: 0.7, sigma_e: 1.0 };
        let mut c = Ar1Closure::new(coeffs, params);
        let x = [1.0, 2.0, 3.0];
        let mut u1 = [0.0; 3];
        let mut u2 = [0.0; 3];
        c.reset(99);
        let mut seq1 = Vec::new();
        for step in 0..10 {
            c.subgrid_into(&x, step, &mut u1);
            seq1.push(u1);
        }
        c.reset(99);
        for (step, want) in seq1.iter().enumerate() {
            c.subgrid_into(&x, step, &mut u2);
            assert_eq!(&u2, want);
        }
    }

    /// The closure's mean over noise realizations equals the cubic.
    #[test]
    fn mean_tendency_is_cubic() {
        let coeffs = CubicCoeffs { a: 0.01, b: -0.1, c: 1.0, d: 0.5 };
        let params = Ar1Params { rho: 0.9, sigma_e: 1.2 };
        let x = [3.0];
        let n = 20_000;
        let mut sum = 0.0;
        let mut c = Ar1Closure::new(coeffs, params);
        for seed in 0..n {
            c.reset(seed as u64);
            let mut u = [0.0];
            c.subgrid_into(&x, 0, &mut u);
            sum += u[0];
        }
        let mean = sum / n as f64;
        let want = eval_cubic(&coeffs, x[0]);
        let se = params.sigma_e / (n as f64).sqrt();
        assert!((mean - want).abs() < 3.0 * se, "mean {mean} vs cubic {want}");
    }
}
