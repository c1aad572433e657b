//! Affine coupling layers.
//!
//! Each layer passes the masked coordinates through unchanged and applies an
//! affine map `x ↦ x·exp(s) + t` to the rest, with `(s, t)` computed by two
//! dense networks from the masked coordinates and the conditioning vector.
//! The log-scale is saturated as `s = s_cap · tanh(ŝ)` to keep the map
//! invertible and numerically tame. The Jacobian is triangular, so the
//! log-determinant is just `Σ s` over transformed coordinates.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpCache, MlpGrads};
use crate::seed::NoiseStream;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Coupling {
    /// 1.0 = coordinate passes through and feeds the nets, 0.0 = transformed.
    pub mask: Array1<f64>,
    pub s_net: Mlp,
    pub t_net: Mlp,
    pub s_cap: f64,
}

/// Alternating binary mask; `parity = 0` passes even coordinates.
pub fn alternating_mask(k: usize, parity: usize) -> Array1<f64> {
    Array1::from_iter((0..k).map(|i| if i % 2 == parity % 2 { 1.0 } else { 0.0 }))
}

/// Intermediates from [`Coupling::inverse_cached`] needed for the backward
/// pass of the negative log-likelihood.
pub struct CouplingCache {
    s_cache: MlpCache,
    t_cache: MlpCache,
    /// tanh(ŝ), kept to differentiate the saturation cheaply.
    th: Array2<f64>,
    s: Array2<f64>,
    /// The layer output x (toward the base distribution).
    x: Array2<f64>,
}

pub struct CouplingGrads {
    pub s: MlpGrads,
    pub t: MlpGrads,
}

impl Coupling {
    #[allow(clippy::too_many_arguments)] // architecture knobs, set in one place
    pub fn new(
        k: usize,
        cond_dim: usize,
        hidden: usize,
        depth: usize,
        s_cap: f64,
        parity: usize,
        zero_init: bool,
        noise: &mut NoiseStream,
    ) -> Self {
        let mut sizes = vec![k + cond_dim];
        sizes.extend(std::iter::repeat_n(hidden, depth));
        sizes.push(k);
        Self {
            mask: alternating_mask(k, parity),
            s_net: Mlp::new(&sizes, zero_init, noise),
            t_net: Mlp::new(&sizes, zero_init, noise),
            s_cap,
        }
    }

    pub fn grads_like(&self) -> CouplingGrads {
        CouplingGrads { s: self.s_net.grads_like(), t: self.t_net.grads_like() }
    }

    fn net_input(&self, v: &Array2<f64>, cond: &Array2<f64>) -> Array2<f64> {
        let (b, k) = v.dim();
        let mut h = Array2::zeros((b, k + cond.ncols()));
        h.slice_mut(ndarray::s![.., ..k]).assign(&(v * &self.mask));
        h.slice_mut(ndarray::s![.., k..]).assign(cond);
        h
    }

    fn scales(&self, h: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let mut th = self.s_net.forward(h);
        th.mapv_inplace(f64::tanh);
        let s = self.s_cap * &th;
        (s, th)
    }

    /// Base-to-data direction. Returns the output and per-row log|det J|.
    pub fn forward_batch(&self, x: &Array2<f64>, cond: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
        let h = self.net_input(x, cond);
        let (s, _) = self.scales(&h);
        let t = self.t_net.forward(&h);
        let mut y = x.clone();
        let mut logdet = Array1::zeros(x.nrows());
        for ((mut yr, sr), (tr, ld)) in y
            .axis_iter_mut(Axis(0))
            .zip(s.axis_iter(Axis(0)))
            .zip(t.axis_iter(Axis(0)).zip(logdet.iter_mut()))
        {
            for k in 0..yr.len() {
                if self.mask[k] == 0.0 {
                    yr[k] = yr[k] * sr[k].exp() + tr[k];
                    *ld += sr[k];
                }
            }
        }
        (y, logdet)
    }

    /// Data-to-base direction. Returns the output and per-row log|det J|
    /// of the inverse map (i.e. `−Σ s`).
    pub fn inverse_batch(&self, y: &Array2<f64>, cond: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
        let (x, cache) = self.inverse_cached(y, cond);
        let mut logdet = Array1::zeros(y.nrows());
        for (sr, ld) in cache.s.axis_iter(Axis(0)).zip(logdet.iter_mut()) {
            for k in 0..sr.len() {
                if self.mask[k] == 0.0 {
                    *ld -= sr[k];
                }
            }
        }
        (x, logdet)
    }

    /// Inverse pass retaining intermediates for [`Coupling::backward_inverse`].
    pub fn inverse_cached(&self, y: &Array2<f64>, cond: &Array2<f64>) -> (Array2<f64>, CouplingCache) {
        let h = self.net_input(y, cond);
        let (s_hat, s_cache) = self.s_net.forward_cached(&h);
        let mut th = s_hat;
        th.mapv_inplace(f64::tanh);
        let s = self.s_cap * &th;
        let (t, t_cache) = self.t_net.forward_cached(&h);
        let mut x = y.clone();
        for ((mut xr, sr), tr) in x
            .axis_iter_mut(Axis(0))
            .zip(s.axis_iter(Axis(0)))
            .zip(t.axis_iter(Axis(0)))
        {
            for k in 0..xr.len() {
                if self.mask[k] == 0.0 {
                    xr[k] = (xr[k] - tr[k]) * (-sr[k]).exp();
                }
            }
        }
        let cache = CouplingCache { s_cache, t_cache, th, s, x: x.clone() };
        (x, cache)
    }

    /// Per-row log|det J| of the inverse map from a cached pass (`−Σ s`
    /// over transformed coordinates).
    pub fn cache_logdet_rows(&self, cache: &CouplingCache) -> Array1<f64> {
        let mut logdet = Array1::zeros(cache.s.nrows());
        for (sr, ld) in cache.s.axis_iter(Axis(0)).zip(logdet.iter_mut()) {
            for k in 0..sr.len() {
                if self.mask[k] == 0.0 {
                    *ld -= sr[k];
                }
            }
        }
        logdet
    }

    /// Backward pass through the inverse map for a loss of the form
    /// `L = f(x) + det_w · Σ_rows Σ_k (1−m_k) s`, given `∂L/∂x` in `grad_x`
    /// and the log-determinant weight `det_w` (1/batch for a mean NLL).
    /// Accumulates parameter gradients and returns `∂L/∂y`.
    pub fn backward_inverse(
        &self,
        cache: &CouplingCache,
        grad_x: &Array2<f64>,
        det_w: f64,
        grads: &mut CouplingGrads,
    ) -> Array2<f64> {
        let (b, k) = grad_x.dim();
        let mut grad_y = Array2::zeros((b, k));
        let mut grad_s = Array2::zeros((b, k));
        let mut grad_t = Array2::zeros((b, k));
        for r in 0..b {
            for c in 0..k {
                if self.mask[c] == 1.0 {
                    grad_y[[r, c]] = grad_x[[r, c]];
                } else {
                    let e = (-cache.s[[r, c]]).exp();
                    grad_y[[r, c]] = grad_x[[r, c]] * e;
                    grad_t[[r, c]] = -grad_x[[r, c]] * e;
                    // d/ds of (y−t)e^{−s} is −x; the det term adds det_w.
                    grad_s[[r, c]] = -grad_x[[r, c]] * cache.x[[r, c]] + det_w;
                }
            }
        }
        // Through the tanh saturation: ds/dŝ = s_cap (1 − tanh²).
        let grad_s_hat = &grad_s * &cache.th.mapv(|v| self.s_cap * (1.0 - v * v));
        let gh_s = self.s_net.backward(&cache.s_cache, &grad_s_hat, &mut grads.s);
        let gh_t = self.t_net.backward(&cache.t_cache, &grad_t, &mut grads.t);
        let gh = gh_s + gh_t;
        // Only masked coordinates of y enter the net input; cond is exogenous.
        for r in 0..b {
            for c in 0..k {
                if self.mask[c] == 1.0 {
                    grad_y[[r, c]] += gh[[r, c]];
                }
            }
        }
        grad_y
    }

    pub fn param_slices(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.s_net.param_slices();
        v.extend(self.t_net.param_slices());
        v
    }
}

impl CouplingGrads {
    pub fn zero(&mut self) {
        self.s.zero();
        self.t.zero();
    }

    pub fn grad_slices(&self) -> Vec<&[f64]> {
        let mut v = self.s.grad_slices();
        v.extend(self.t.grad_slices());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn random_coupling(k: usize, cond_dim: usize, seed: u64) -> Coupling {
        let mut noise = NoiseStream::from_seed(seed);
        // Non-zero final layers so the map is a genuine transformation.
        Coupling::new(k, cond_dim, 8, 2, 3.0, 0, false, &mut noise)
    }

    #[test]
    fn zero_initialized_layer_is_identity() {
        let mut noise = NoiseStream::from_seed(2);
        let c = Coupling::new(4, 2, 8, 2, 3.0, 1, true, &mut noise);
        let x = array![[0.3, -1.2, 2.0, 0.7], [1.0, 0.0, -0.5, 3.1]];
        let cond = array![[0.5, -0.5], [1.5, 2.5]];
        let (y, logdet) = c.forward_batch(&x, &cond);
        assert_eq!(y, x);
        assert!(logdet.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_inverse_round_trip() {
        let c = random_coupling(4, 3, 7);
        let mut noise = NoiseStream::from_seed(11);
        let mut x = Array2::zeros((16, 4));
        let mut cond = Array2::zeros((16, 3));
        for v in x.iter_mut() {
            *v = 2.0 * noise.standard_normal();
        }
        for v in cond.iter_mut() {
            *v = noise.standard_normal();
        }
        let (y, ld_f) = c.forward_batch(&x, &cond);
        let (x2, ld_i) = c.inverse_batch(&y, &cond);
        for (a, b) in x.iter().zip(x2.iter()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        for (f, i) in ld_f.iter().zip(ld_i.iter()) {
            assert!((f + i).abs() < 1e-12);
        }
    }

    /// Analytic log-determinant vs log|det| of a finite-difference Jacobian
    /// in two dimensions.
    #[test]
    fn logdet_matches_numerical_jacobian() {
        let c = random_coupling(2, 1, 13);
        let x0 = array![[0.4, -0.9]];
        let cond = array![[0.6]];
        let (_, ld) = c.forward_batch(&x0, &cond);

        let h = 1e-6;
        let mut jac = [[0.0; 2]; 2];
        for j in 0..2 {
            let mut xp = x0.clone();
            xp[[0, j]] += h;
            let mut xm = x0.clone();
            xm[[0, j]] -= h;
            let (yp, _) = c.forward_batch(&xp, &cond);
            let (ym, _) = c.forward_batch(&xm, &cond);
            for i in 0..2 {
                jac[i][j] = (yp[[0, i]] - ym[[0, i]]) / (2.0 * h);
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        assert!(
            (det.abs().ln() - ld[0]).abs() < 1e-6,
            "numeric {} vs analytic {}",
            det.abs().ln(),
            ld[0]
        );
    }

    /// Gradient of L = ½Σx² + (1/B)·Σ(1−m)s through the inverse pass vs
    /// central finite differences, for both y and all parameters.
    #[test]
    fn backward_inverse_matches_finite_differences() {
        let mut c = random_coupling(3, 2, 23);
        let mut noise = NoiseStream::from_seed(29);
        let mut y = Array2::zeros((5, 3));
        let mut cond = Array2::zeros((5, 2));
        for v in y.iter_mut() {
            *v = 1.5 * noise.standard_normal();
        }
        for v in cond.iter_mut() {
            *v = noise.standard_normal();
        }
        let det_w = 1.0 / 5.0;

        let loss = |c: &Coupling, y: &Array2<f64>, cond: &Array2<f64>| -> f64 {
            let (x, ld_inv) = c.inverse_batch(y, cond);
            // ld_inv = −Σ(1−m)s per row, so the det penalty is −Σ ld_inv.
            0.5 * x.iter().map(|v| v * v).sum::<f64>() - det_w * ld_inv.sum()
        };

        let (x, cache) = c.inverse_cached(&y, &cond);
        let mut grads = c.grads_like();
        let grad_y = c.backward_inverse(&cache, &x, det_w, &mut grads);

        let h = 1e-6;
        for r in 0..y.nrows() {
            for cc in 0..y.ncols() {
                let orig = y[[r, cc]];
                y[[r, cc]] = orig + h;
                let up = loss(&c, &y, &cond);
                y[[r, cc]] = orig - h;
                let down = loss(&c, &y, &cond);
                y[[r, cc]] = orig;
                let numeric = (up - down) / (2.0 * h);
                let denom = numeric.abs().max(grad_y[[r, cc]].abs()).max(1e-8);
                assert!(
                    ((numeric - grad_y[[r, cc]]) / denom).abs() < 1e-4,
                    "y({r},{cc}): analytic {} vs numeric {numeric}",
                    grad_y[[r, cc]]
                );
            }
        }

        let analytic: Vec<f64> = grads.grad_slices().iter().flat_map(|s| s.iter().copied()).collect();
        let n_params: usize = c.param_slices().iter().map(|s| s.len()).sum();
        for p in 0..n_params {
            let perturb = |c: &mut Coupling, p: usize, delta: f64| -> f64 {
                let mut slices = c.param_slices();
                let mut q = p;
                let mut si = 0;
                while q >= slices[si].len() {
                    q -= slices[si].len();
                    si += 1;
                }
                let orig = slices[si][q];
                slices[si][q] = orig + delta;
                orig
            };
            let orig = perturb(&mut c, p, h);
            let up = loss(&c, &y, &cond);
            perturb(&mut c, p, -2.0 * h);
            let down = loss(&c, &y, &cond);
            // restore
            {
                let mut slices = c.param_slices();
                let mut q = p;
                let mut si = 0;
                while q >= slices[si].len() {
                    q -= slices[si].len();
                    si += 1;
                }
                slices[si][q] = orig;
            }
            let numeric = (up - down) / (2.0 * h);
            let denom = numeric.abs().max(analytic[p].abs()).max(1e-8);
            assert!(
                ((numeric - analytic[p]) / denom).abs() < 1e-4,
                "param {p}: analytic {} vs numeric {numeric}",
                analytic[p]
            );
        }
    }
}
