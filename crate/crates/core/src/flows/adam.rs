//! Adam optimizer over flat parameter slices.

/// Adam with bias correction. Parameter groups are identified by position,
/// so callers must pass slices in the same order every step.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Vec::new(), v: Vec::new() }
    }

    /// One update step. `params` and `grads` must zip into equal-length
    /// groups; the first call fixes the group layout.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient group mismatch");
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for (gi, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            assert_eq!(p.len(), g.len(), "group {gi} length mismatch");
            let m = &mut self.m[gi];
            let v = &mut self.v[gi];
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Adam on a convex quadratic reaches the minimum.
    #[test]
    fn minimizes_quadratic() {
        let mut x = vec![5.0, -3.0, 2.0];
        let target = [1.0, 2.0, -0.5];
        let mut opt = Adam::new(0.05);
        for _ in 0..2000 {
            let g: Vec<f64> = x.iter().zip(&target).map(|(xi, ti)| 2.0 * (xi - ti)).collect();
            opt.step(&mut [&mut x], &[&g]);
        }
        for (xi, ti) in x.iter().zip(&target) {
            assert!((xi - ti).abs() < 1e-6, "{xi} vs {ti}");
        }
    }

    /// First-step magnitude is lr regardless of gradient scale.
    #[test]
    fn first_step_is_lr_sized() {
        let mut x = vec![0.0];
        let mut opt = Adam::new(0.001);
        opt.step(&mut [&mut x], &[&[1234.5]]);
        assert!((x[0] + 0.001).abs() < 1e-9, "got {}", x[0]);
    }
}
