//! Dense ReLU networks with hand-rolled reverse-mode differentiation.
//!
//! The networks are small (a few hidden layers of ≤128 units), so explicit
//! forward caches and backward passes over `ndarray` matrices are simpler
//! and faster here than a general autodiff graph.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::seed::NoiseStream;

/// One dense layer: `out = x · w + b`, weights stored `(fan_in, fan_out)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            w: Array2::zeros((fan_in, fan_out)),
            b: Array1::zeros(fan_out),
        }
    }

    /// He (fan-in-scaled) initialization for ReLU hidden layers.
    fn he_init(fan_in: usize, fan_out: usize, noise: &mut NoiseStream) -> Self {
        let std = (2.0 / fan_in as f64).sqrt();
        let mut w = Array2::zeros((fan_in, fan_out));
        for v in w.iter_mut() {
            *v = std * noise.standard_normal();
        }
        Self { w, b: Array1::zeros(fan_out) }
    }
}

/// Multilayer perceptron: ReLU on hidden layers, linear output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Post-activation values cached by [`Mlp::forward_cached`]; the ReLU mask
/// is recovered from the sign of the cached activations.
pub struct MlpCache {
    /// `acts[0]` is the input; `acts[i]` the post-ReLU output of layer `i-1`
    /// for hidden layers. The final linear output is not cached.
    acts: Vec<Array2<f64>>,
}

/// Parameter gradients mirroring [`Mlp`]'s layout.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// Network mapping `sizes[0]` inputs through hidden layers to
    /// `sizes.last()` outputs. With `zero_final`, the output layer starts
    /// at exactly zero (used to make flows start as the identity map).
    pub fn new(sizes: &[usize], zero_final: bool, noise: &mut NoiseStream) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for i in 0..sizes.len() - 1 {
            let last = i == sizes.len() - 2;
            layers.push(if last && zero_final {
                Dense::zeros(sizes[i], sizes[i + 1])
            } else {
                Dense::he_init(sizes[i], sizes[i + 1], noise)
            });
        }
        Self { layers }
    }

    pub fn grads_like(&self) -> MlpGrads {
        MlpGrads {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.w.nrows(), l.w.ncols()))
                .collect(),
        }
    }

    /// Batched forward pass, rows are samples.
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut a = x.dot(&self.layers[0].w) + &self.layers[0].b;
        for layer in &self.layers[1..] {
            a.mapv_inplace(|v| v.max(0.0));
            a = a.dot(&layer.w) + &layer.b;
        }
        a
    }

    /// Forward pass retaining the activations needed by [`Mlp::backward`].
    pub fn forward_cached(&self, x: &Array2<f64>) -> (Array2<f64>, MlpCache) {
        let mut acts = Vec::with_capacity(self.layers.len());
        acts.push(x.clone());
        let mut a = x.dot(&self.layers[0].w) + &self.layers[0].b;
        for layer in &self.layers[1..] {
            a.mapv_inplace(|v| v.max(0.0));
            acts.push(a.clone());
            a = a.dot(&layer.w) + &layer.b;
        }
        (a, MlpCache { acts })
    }

    /// Reverse-mode pass: accumulates parameter gradients into `grads`
    /// (`+=`, callers zero them per batch) and returns the input gradient.
    pub fn backward(&self, cache: &MlpCache, grad_out: &Array2<f64>, grads: &mut MlpGrads) -> Array2<f64> {
        let mut g = grad_out.clone();
        for i in (0..self.layers.len()).rev() {
            let a_in = &cache.acts[i];
            grads.layers[i].w += &a_in.t().dot(&g);
            grads.layers[i].b += &g.sum_axis(Axis(0));
            g = g.dot(&self.layers[i].w.t());
            if i > 0 {
                // ReLU mask of the layer input (post-activation of layer i-1).
                g.zip_mut_with(a_in, |gv, &av| {
                    if av <= 0.0 {
                        *gv = 0.0;
                    }
                });
            }
        }
        g
    }

    /// Flat views of all parameters, fixed order (layer-major, w then b).
    pub fn param_slices(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for layer in &mut self.layers {
            out.push(layer.w.as_slice_mut().expect("standard layout"));
            out.push(layer.b.as_slice_mut().expect("standard layout"));
        }
        out
    }
}

impl MlpGrads {
    pub fn zero(&mut self) {
        for l in &mut self.layers {
            l.w.fill(0.0);
            l.b.fill(0.0);
        }
    }

    pub fn grad_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for layer in &self.layers {
            out.push(layer.w.as_slice().expect("standard layout"));
            out.push(layer.b.as_slice().expect("standard layout"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Analytic input/parameter gradients vs central finite differences on
    /// a scalar loss L = Σ out².
    #[test]
    fn gradients_match_finite_differences() {
        let mut noise = NoiseStream::from_seed(5);
        let mut mlp = Mlp::new(&[3, 8, 8, 2], false, &mut noise);
        let mut x = Array2::zeros((4, 3));
        for v in x.iter_mut() {
            *v = noise.standard_normal();
        }

        let loss = |m: &Mlp, x: &Array2<f64>| -> f64 { m.forward(x).iter().map(|v| v * v).sum() };

        let (out, cache) = mlp.forward_cached(&x);
        let mut grads = mlp.grads_like();
        let grad_out = 2.0 * &out;
        let grad_in = mlp.backward(&cache, &grad_out, &mut grads);

        // Parameter gradients.
        let h = 1e-6;
        let analytic: Vec<f64> = grads.grad_slices().iter().flat_map(|s| s.iter().copied()).collect();
        let n_params: usize = mlp.param_slices().iter().map(|s| s.len()).sum();
        for p in 0..n_params {
            // locate parameter p
            let base = {
                let mut slices = mlp.param_slices();
                let mut q = p;
                let mut si = 0;
                while q >= slices[si].len() {
                    q -= slices[si].len();
                    si += 1;
                }
                let orig = slices[si][q];
                slices[si][q] = orig + h;
                orig
            };
            let up = loss(&mlp, &x);
            {
                let mut slices = mlp.param_slices();
                let mut q = p;
                let mut si = 0;
                while q >= slices[si].len() {
                    q -= slices[si].len();
                    si += 1;
                }
                slices[si][q] = base - h;
            }
            let down = loss(&mlp, &x);
            {
                let mut slices = mlp.param_slices();
                let mut q = p;
                let mut si = 0;
                while q >= slices[si].len() {
                    q -= slices[si].len();
                    si += 1;
                }
                slices[si][q] = base;
            }
            let numeric = (up - down) / (2.0 * h);
            let denom = numeric.abs().max(analytic[p].abs()).max(1e-8);
            assert!(
                ((numeric - analytic[p]) / denom).abs() < 1e-4,
                "param {p}: analytic {} vs numeric {numeric}",
                analytic[p]
            );
        }

        // Input gradients.
        for r in 0..x.nrows() {
            for c in 0..x.ncols() {
                let orig = x[[r, c]];
                x[[r, c]] = orig + h;
                let up = loss(&mlp, &x);
                x[[r, c]] = orig - h;
                let down = loss(&mlp, &x);
                x[[r, c]] = orig;
                let numeric = (up - down) / (2.0 * h);
                let denom = numeric.abs().max(grad_in[[r, c]].abs()).max(1e-8);
                assert!(
                    ((numeric - grad_in[[r, c]]) / denom).abs() < 1e-4,
                    "input ({r},{c}): analytic {} vs numeric {numeric}",
                    grad_in[[r, c]]
                );
            }
        }
    }

    #[test]
    fn zero_final_layer_outputs_zero() {
        let mut noise = NoiseStream::from_seed(1);
        let mlp = Mlp::new(&[4, 16, 3], true, &mut noise);
        let x = Array2::from_elem((5, 4), 1.7);
        let out = mlp.forward(&x);
        assert!(out.iter().all(|&v| v == 0.0));
    }
}
