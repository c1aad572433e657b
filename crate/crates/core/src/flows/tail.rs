//! Elementwise monotone tail warp.
//!
//! Per output dimension the warp is
//!
//! ```text
//! R(y) = μ + σ (s/λ_s) [ erfc(|y|/√2)^(−λ_s) − 1 ],   s = sign(y),
//! ```
//!
//! with separate exponents λ⁺/λ⁻ for the two sides. Applied after the
//! coupling stack it stretches Gaussian-ish tails into heavier ones while
//! staying analytically invertible. σ and λ± are trained in log space to
//! stay positive. `erfc` is evaluated in log space, switching to an
//! asymptotic expansion for |y| > 8 where the direct value loses accuracy.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

/// |y|/√2 beyond which `ln erfc` switches to the asymptotic expansion.
const LN_ERFC_SWITCH: f64 = 8.0 / std::f64::consts::SQRT_2;

/// ln erfc(x) for x ≥ 0, accurate into the deep tail.
pub fn ln_erfc(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < LN_ERFC_SWITCH {
        erfc(x).ln()
    } else {
        // erfc(x) ~ e^{−x²}/(x√π) · Σ_k (−1)^k (2k−1)!!/(2x²)^k
        let inv2x2 = 1.0 / (2.0 * x * x);
        let mut term = 1.0;
        let mut series = 1.0;
        for k in 1..=12 {
            term *= -((2 * k - 1) as f64) * inv2x2;
            series += term;
        }
        -x * x - (x * std::f64::consts::PI.sqrt()).ln() + series.ln()
    }
}

/// d/dx ln erfc(x) = −(2/√π) e^{−x²}/erfc(x), computed in log space.
pub fn dln_erfc(x: f64) -> f64 {
    -(2.0 / std::f64::consts::PI.sqrt()) * (-x * x - ln_erfc(x)).exp()
}

/// Solve ln erfc(x) = target for x ≥ 0 by damped Newton iteration.
///
/// Saturated inputs stay graceful: a target of −∞ (an argument past the
/// representable range of the warp) maps to +∞ rather than panicking.
pub fn inv_ln_erfc(target: f64) -> f64 {
    debug_assert!(target.is_nan() || target <= 0.0);
    if target.is_nan() {
        return f64::NAN;
    }
    if target == 0.0 {
        return 0.0;
    }
    if target == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    // Initial guess: linearization near 0 or the leading −x² behaviour.
    let mut x = if target > -1.0 {
        -target * std::f64::consts::PI.sqrt() / 2.0
    } else {
        (-target).sqrt()
    };
    for _ in 0..60 {
        let f = ln_erfc(x) - target;
        let fp = dln_erfc(x);
        let mut step = f / fp;
        // Keep iterates in the domain.
        if x - step < 0.0 {
            step = x / 2.0;
        }
        x -= step;
        if step.abs() < 1e-14 * (1.0 + x.abs()) {
            break;
        }
    }
    x
}

/// Per-dimension warp parameters; σ and λ± are stored in log space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailParams {
    pub mu: Array1<f64>,
    pub log_sigma: Array1<f64>,
    pub log_lam_pos: Array1<f64>,
    pub log_lam_neg: Array1<f64>,
}

/// Per-element intermediates retained by [`TailParams::inverse_batch`].
pub struct TailCache {
    pub y: Array2<f64>,
    ln_g: Array2<f64>,
    g_pow: Array2<f64>,
    lam: Array2<f64>,
    side: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct TailGrads {
    pub mu: Array1<f64>,
    pub log_sigma: Array1<f64>,
    pub log_lam_pos: Array1<f64>,
    pub log_lam_neg: Array1<f64>,
}

impl TailParams {
    pub fn new(k: usize) -> Self {
        Self {
            mu: Array1::zeros(k),
            // Start with slope ≈ 1 at the origin (R'(0) = σ√(2/π)) and a
            // mild tail exponent; training adapts from there.
            log_sigma: Array1::from_elem(k, (std::f64::consts::PI / 2.0).sqrt().ln()),
            log_lam_pos: Array1::from_elem(k, 0.5f64.ln()),
            log_lam_neg: Array1::from_elem(k, 0.5f64.ln()),
        }
    }

    pub fn from_values(mu: &[f64], sigma: &[f64], lam_pos: &[f64], lam_neg: &[f64]) -> Self {
        Self {
            mu: Array1::from_vec(mu.to_vec()),
            log_sigma: Array1::from_iter(sigma.iter().map(|v| v.ln())),
            log_lam_pos: Array1::from_iter(lam_pos.iter().map(|v| v.ln())),
            log_lam_neg: Array1::from_iter(lam_neg.iter().map(|v| v.ln())),
        }
    }

    pub fn grads_like(&self) -> TailGrads {
        let k = self.mu.len();
        TailGrads {
            mu: Array1::zeros(k),
            log_sigma: Array1::zeros(k),
            log_lam_pos: Array1::zeros(k),
            log_lam_neg: Array1::zeros(k),
        }
    }

    fn pick_lam(&self, d: usize, y: f64) -> f64 {
        if y >= 0.0 {
            self.log_lam_pos[d].exp()
        } else {
            self.log_lam_neg[d].exp()
        }
    }

    /// Forward warp u = R(y), elementwise per dimension (column).
    pub fn forward_scalar(&self, d: usize, y: f64) -> f64 {
        let sigma = self.log_sigma[d].exp();
        if y == 0.0 {
            return self.mu[d];
        }
        let s = y.signum();
        let lam = self.pick_lam(d, y);
        let ln_g = ln_erfc(y.abs() / std::f64::consts::SQRT_2);
        let g_pow = (-lam * ln_g).exp();
        self.mu[d] + sigma * (s / lam) * (g_pow - 1.0)
    }

    /// Inverse warp y = R⁻¹(u), elementwise.
    pub fn inverse_scalar(&self, d: usize, u: f64) -> f64 {
        let sigma = self.log_sigma[d].exp();
        let dev = u - self.mu[d];
        if dev == 0.0 {
            return 0.0;
        }
        let s = dev.signum();
        let lam = self.pick_lam(d, dev);
        let w = dev.abs() * lam / sigma;
        let ln_g = -w.ln_1p() / lam;
        s * std::f64::consts::SQRT_2 * inv_ln_erfc(ln_g)
    }

    /// log R'(y): the log-derivative of the warp, needed for densities.
    pub fn log_deriv_scalar(&self, d: usize, y: f64) -> f64 {
        let lam = self.pick_lam(d, y);
        let ln_g = ln_erfc(y.abs() / std::f64::consts::SQRT_2);
        self.log_sigma[d] + 0.5 * (2.0 / std::f64::consts::PI).ln() - 0.5 * y * y
            - (lam + 1.0) * ln_g
    }

    pub fn forward_batch(&self, y: &Array2<f64>) -> Array2<f64> {
        let mut u = y.clone();
        for mut row in u.rows_mut() {
            for d in 0..row.len() {
                row[d] = self.forward_scalar(d, row[d]);
            }
        }
        u
    }

    /// Inverse over a batch, retaining the intermediates used by both the
    /// density evaluation and the training backward pass.
    pub fn inverse_batch(&self, u: &Array2<f64>) -> TailCache {
        let (b, k) = u.dim();
        let mut y = Array2::zeros((b, k));
        let mut ln_g = Array2::zeros((b, k));
        let mut g_pow = Array2::zeros((b, k));
        let mut lam = Array2::zeros((b, k));
        let mut side = Array2::zeros((b, k));
        for r in 0..b {
            for d in 0..k {
                let sigma = self.log_sigma[d].exp();
                let dev = u[[r, d]] - self.mu[d];
                let s = if dev == 0.0 { 0.0 } else { dev.signum() };
                let l = self.pick_lam(d, dev);
                let w = dev.abs() * l / sigma;
                let lg = -w.ln_1p() / l;
                y[[r, d]] = s * std::f64::consts::SQRT_2 * inv_ln_erfc(lg);
                ln_g[[r, d]] = lg;
                g_pow[[r, d]] = 1.0 + w;
                lam[[r, d]] = l;
                side[[r, d]] = s;
            }
        }
        TailCache { y, ln_g, g_pow, lam, side }
    }

    /// Σ_d log R'(y_d) per row, from a cached inverse pass.
    pub fn log_deriv_rows(&self, cache: &TailCache) -> Array1<f64> {
        let (b, k) = cache.y.dim();
        let mut out = Array1::zeros(b);
        let half_ln_2_over_pi = 0.5 * (2.0 / std::f64::consts::PI).ln();
        for r in 0..b {
            let mut acc = 0.0;
            for d in 0..k {
                acc += self.log_sigma[d] + half_ln_2_over_pi
                    - 0.5 * cache.y[[r, d]] * cache.y[[r, d]]
                    - (cache.lam[[r, d]] + 1.0) * cache.ln_g[[r, d]];
            }
            out[r] = acc;
        }
        out
    }

    /// Backward pass for a loss `L = F(y) + det_w Σ log R'(y)` where y is
    /// defined implicitly by R(y; φ) = u. `grad_y_chain` is ∂F/∂y from the
    /// layers below; parameter gradients accumulate into `grads`.
    pub fn backward(
        &self,
        cache: &TailCache,
        grad_y_chain: &Array2<f64>,
        det_w: f64,
        grads: &mut TailGrads,
    ) {
        let (b, k) = cache.y.dim();
        let sqrt_2_over_pi = (2.0 / std::f64::consts::PI).sqrt();
        for r in 0..b {
            for d in 0..k {
                let y = cache.y[[r, d]];
                let lam = cache.lam[[r, d]];
                let ln_g = cache.ln_g[[r, d]];
                let g_pow = cache.g_pow[[r, d]];
                let s = cache.side[[r, d]];
                let sigma = self.log_sigma[d].exp();

                // R'(y) and ∂log R'/∂y.
                let log_rp = self.log_sigma[d] + 0.5 * (2.0 / std::f64::consts::PI).ln()
                    - 0.5 * y * y
                    - (lam + 1.0) * ln_g;
                let rp = log_rp.exp();
                // d ln G/dy = −s √(2/π) e^{−y²/2} / G.
                let dlng_dy = -s * sqrt_2_over_pi * (-0.5 * y * y - ln_g).exp();
                let dlogrp_dy = -y - (lam + 1.0) * dlng_dy;

                let gy_tot = grad_y_chain[[r, d]] + det_w * dlogrp_dy;
                let pull = -gy_tot / rp;

                // ∂R/∂φ at fixed y.
                let dr_dmu = 1.0;
                let dr_dsigma = (s / lam) * (g_pow - 1.0);
                let dr_dlam = if s == 0.0 {
                    0.0
                } else {
                    sigma * s * (-ln_g * g_pow / lam - (g_pow - 1.0) / (lam * lam))
                };

                grads.mu[d] += pull * dr_dmu;
                // Chain to log-space parameters: ∂/∂log σ = σ ∂/∂σ.
                grads.log_sigma[d] += sigma * (pull * dr_dsigma + det_w / sigma);
                let dlam = lam * (pull * dr_dlam + det_w * (-ln_g));
                if s >= 0.0 {
                    grads.log_lam_pos[d] += dlam;
                } else {
                    grads.log_lam_neg[d] += dlam;
                }
            }
        }
    }

    pub fn param_slices(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.mu.as_slice_mut().expect("standard layout"),
            self.log_sigma.as_slice_mut().expect("standard layout"),
            self.log_lam_pos.as_slice_mut().expect("standard layout"),
            self.log_lam_neg.as_slice_mut().expect("standard layout"),
        ]
    }
}

impl TailGrads {
    pub fn zero(&mut self) {
        self.mu.fill(0.0);
        self.log_sigma.fill(0.0);
        self.log_lam_pos.fill(0.0);
        self.log_lam_neg.fill(0.0);
    }

    pub fn grad_slices(&self) -> Vec<&[f64]> {
        vec![
            self.mu.as_slice().expect("standard layout"),
            self.log_sigma.as_slice().expect("standard layout"),
            self.log_lam_pos.as_slice().expect("standard layout"),
            self.log_lam_neg.as_slice().expect("standard layout"),
        ]
    }
}
