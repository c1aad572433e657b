//! Bayesian polynomial regression closure.
//!
//! The cubic model `u = a x³ + b x² + c x + d + ε`, `ε ~ N(0, σ²)`, is
//! linear in its coefficients, so with a Normal–Inverse-Gamma prior the
//! posterior is available in closed form — no MCMC needed at runtime. Each
//! model realization draws one coefficient set from the posterior and uses
//! it as a deterministic cubic for the whole trajectory, so ensemble
//! variability reflects parametric uncertainty only.

use nalgebra::{Cholesky, Matrix4, Vector4};
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::{eval_cubic, Closure, CubicCoeffs};
use crate::error::Error;
use crate::seed::NoiseStream;
use crate::Result;

/// Normal–Inverse-Gamma prior: `β | σ² ~ N(0, σ² v0 I)`,
/// `σ² ~ InvGamma(shape, rate)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NigPrior {
    /// Coefficient prior variance scale (per σ² unit).
    pub v0: f64,
    pub shape: f64,
    pub rate: f64,
}

impl Default for NigPrior {
    /// Weakly informative: coefficient scale 10, diffuse noise variance.
    fn default() -> Self {
        Self { v0: 100.0, shape: 2.0, rate: 2.0 }
    }
}

/// Conjugate posterior: `β | σ² ~ N(mean, σ² cov_scale)`,
/// `σ² ~ InvGamma(shape, rate)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesPosterior {
    pub mean: [f64; 4],
    /// `V_n`, the σ²-scaled coefficient covariance (symmetric PD).
    pub cov_scale: [[f64; 4]; 4],
    pub shape: f64,
    pub rate: f64,
    /// Number of observations absorbed.
    pub n: usize,
}

fn to_matrix(m: &[[f64; 4]; 4]) -> Matrix4<f64> {
    Matrix4::from_fn(|i, j| m[i][j])
}

impl BayesPosterior {
    /// Cholesky factor of `cov_scale`; exact-zero matrices yield a zero
    /// factor (the "posterior collapsed to a point" limit).
    fn chol(&self) -> Result<Matrix4<f64>> {
        let v = to_matrix(&self.cov_scale);
        if v.iter().all(|&x| x == 0.0) {
            return Ok(Matrix4::zeros());
        }
        Cholesky::new(v)
            .map(|c| c.l())
            .ok_or(Error::RankDeficient { context: "posterior covariance factorization" })
    }

    /// Draw `(coefficients, σ²)`: σ² from the inverse gamma, then the
    /// coefficients from the conditional multivariate normal.
    pub fn sample_coefficients(&self, noise: &mut NoiseStream) -> Result<(CubicCoeffs, f64)> {
        let gamma = Gamma::new(self.shape, 1.0 / self.rate)
            .map_err(|e| Error::InvalidConfig(format!("invalid posterior: {e}")))?;
        let g: f64 = gamma.sample(noise.rng());
        let sigma2 = 1.0 / g;
        let l = self.chol()?;
        let z = Vector4::from_fn(|_, _| noise.standard_normal());
        let mean = Vector4::from_column_slice(&self.mean);
        let beta = mean + sigma2.sqrt() * (l * z);
        Ok((CubicCoeffs { a: beta[0], b: beta[1], c: beta[2], d: beta[3] }, sigma2))
    }

    /// Marginal posterior standard deviations of the coefficients
    /// (scaled by the posterior mean of σ²; requires shape > 1).
    pub fn coeff_stds(&self) -> [f64; 4] {
        let sigma2_mean = self.rate / (self.shape - 1.0);
        let mut out = [0.0; 4];
        for i in 0..4 {
            out[i] = (sigma2_mean * self.cov_scale[i][i]).sqrt();
        }
        out
    }

    /// Normalized joint log density `log p(β, σ²)` of the posterior.
    ///
    /// Used by the Metropolis cross-check: the closed form must agree with
    /// direct prior × likelihood evaluation up to a β-independent constant.
    pub fn log_density(&self, coeffs: &CubicCoeffs, sigma2: f64) -> Result<f64> {
        if sigma2 <= 0.0 {
            return Err(Error::Degenerate("σ² must be positive".into()));
        }
        let v = to_matrix(&self.cov_scale);
        let chol = Cholesky::new(v)
            .ok_or(Error::RankDeficient { context: "posterior covariance factorization" })?;
        let ln_det_v: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let mean = Vector4::from_column_slice(&self.mean);
        let beta = Vector4::new(coeffs.a, coeffs.b, coeffs.c, coeffs.d);
        let dev = beta - mean;
        let solved = chol.solve(&dev);
        let quad = dev.dot(&solved);
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        let log_normal =
            -2.0 * (ln2pi + sigma2.ln()) - 0.5 * ln_det_v - quad / (2.0 * sigma2);
        let log_ig = self.shape * self.rate.ln() - ln_gamma(self.shape)
            - (self.shape + 1.0) * sigma2.ln()
            - self.rate / sigma2;
        Ok(log_normal + log_ig)
    }
}

/// Exact conjugate update for the pooled cubic regression.
pub fn fit_bayesian_posterior(x: &[f64], u: &[f64], prior: &NigPrior) -> Result<BayesPosterior> {
    if x.len() != u.len() {
        return Err(Error::Misaligned(format!(
            "{} states vs {} tendencies",
            x.len(),
            u.len()
        )));
    }
    if x.len() < 4 {
        return Err(Error::Degenerate(format!(
            "posterior update needs at least 4 samples, got {}",
            x.len()
        )));
    }
    if !(prior.v0 > 0.0 && prior.shape > 0.0 && prior.rate > 0.0) {
        return Err(Error::InvalidConfig("prior hyperparameters must be positive".into()));
    }

    // Streaming accumulation of Φᵀ Φ, Φᵀ u, uᵀ u for the [x³,x²,x,1] design.
    let mut xtx = Matrix4::zeros();
    let mut xtu = Vector4::zeros();
    let mut utu = 0.0;
    for (&xi, &ui) in x.iter().zip(u) {
        let x2 = xi * xi;
        let phi = Vector4::new(x2 * xi, x2, xi, 1.0);
        xtx += phi * phi.transpose();
        xtu += phi * ui;
        utu += ui * ui;
    }

    // Posterior precision A = V₀⁻¹ + ΦᵀΦ is PD for any proper prior.
    let a_mat = Matrix4::identity() / prior.v0 + xtx;
    let chol = Cholesky::new(a_mat)
        .ok_or(Error::RankDeficient { context: "posterior precision factorization" })?;
    let mean = chol.solve(&xtu);
    let cov = chol.inverse();

    let shape = prior.shape + x.len() as f64 / 2.0;
    let rate = prior.rate + 0.5 * (utu - mean.dot(&(a_mat * mean)));
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::Degenerate(format!("posterior rate {rate} not positive")));
    }

    let mut mean_arr = [0.0; 4];
    let mut cov_arr = [[0.0; 4]; 4];
    for i in 0..4 {
        mean_arr[i] = mean[i];
        for j in 0..4 {
            cov_arr[i][j] = cov[(i, j)];
        }
    }
    Ok(BayesPosterior {
        mean: mean_arr,
        cov_scale: cov_arr,
        shape,
        rate,
        n: x.len(),
    })
}

/// The Bayesian closure: a cubic whose coefficients come from the posterior.
///
/// Constructed at the posterior mean; [`Closure::draw_model`] replaces the
/// active coefficients with a seeded posterior draw (one draw per model
/// realization, fixed for the whole trajectory). Path evaluation is
/// deterministic, so `reset` is a no-op.
#[derive(Debug, Clone)]
pub struct BayesianClosure {
    posterior: BayesPosterior,
    active: CubicCoeffs,
}

impl BayesianClosure {
    pub fn at_posterior_mean(posterior: BayesPosterior) -> Result<Self> {
        let active = CubicCoeffs::from_array(posterior.mean);
        Ok(Self { posterior, active })
    }

    pub fn active_coeffs(&self) -> CubicCoeffs {
        self.active
    }
}

impl Closure for BayesianClosure {
    fn subgrid_into(&mut self, x: &[f64], _step: usize, out: &mut [f64]) {
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = eval_cubic(&self.active, xi);
        }
    }

    fn reset(&mut self, _seed: u64) {}

    fn draw_model(&mut self, seed: u64) {
        let mut noise = NoiseStream::from_seed(seed);
        let (coeffs, _) = self
            .posterior
            .sample_coefficients(&mut noise)
            .expect("posterior validated at construction");
        self.active = coeffs;
    }

    fn is_stochastic(&self) -> bool {
        true
    }

    fn clone_box(&self) -> Box<dyn Closure> {
        Box::new(self.clone())
    }
}
