//! Deterministic cubic closure: `U_p(x) = a x³ + b x² + c x + d`, fit by
//! least squares on the pooled `(X, U)` training pairs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Closure;
use crate::error::Error;
use crate::Result;

/// Cubic polynomial coefficients, highest degree first in meaning:
/// `u = a x³ + b x² + c x + d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl CubicCoeffs {
    pub fn as_array(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self { a: v[0], b: v[1], c: v[2], d: v[3] }
    }
}

/// Horner evaluation of the cubic at a single point.
pub fn eval_cubic(coeffs: &CubicCoeffs, x: f64) -> f64 {
    ((coeffs.a * x + coeffs.b) * x + coeffs.c) * x + coeffs.d
}

/// Pooled least-squares cubic fit.
///
/// Solved via QR on the `[x³, x², x, 1]` design matrix — a numerically
/// stable factorization (plain normal equations square the condition
/// number of the cubic Vandermonde columns).
pub fn fit_cubic_lsq(x: &[f64], u: &[f64]) -> Result<CubicCoeffs> {
    if x.len() != u.len() {
        return Err(Error::Misaligned(format!(
            "{} states vs {} tendencies",
            x.len(),
            u.len()
        )));
    }
    if x.len() < 4 {
        return Err(Error::Degenerate(format!(
            "cubic fit needs at least 4 samples, got {}",
            x.len()
        )));
    }
    let n = x.len();
    let mut design = DMatrix::zeros(n, 4);
    for (i, &xi) in x.iter().enumerate() {
        let x2 = xi * xi;
        design[(i, 0)] = x2 * xi;
        design[(i, 1)] = x2;
        design[(i, 2)] = xi;
        design[(i, 3)] = 1.0;
    }
    let rhs = DVector::from_column_slice(u);
    let qr = design.qr();
    // A numerically rank-deficient R (fewer than 4 distinct x values)
    // surfaces as a tiny diagonal element.
    let r = qr.r();
    let max_diag = (0..4).map(|i| r[(i, i)].abs()).fold(0.0_f64, f64::max);
    if (0..4).any(|i| r[(i, i)].abs() <= 1e-12 * max_diag) || max_diag == 0.0 {
        return Err(Error::RankDeficient {
            context: "cubic least-squares fit",
        });
    }
    // Thin-QR least squares: solve R β = Qᵀ u on the 4×4 upper block.
    let qtb = qr.q().transpose() * rhs;
    let sol = r
        .view((0, 0), (4, 4))
        .solve_upper_triangular(&qtb.rows(0, 4).into_owned())
        .ok_or(Error::RankDeficient { context: "cubic least-squares fit" })?;
    Ok(CubicCoeffs {
        a: sol[0],
        b: sol[1],
        c: sol[2],
        d: sol[3],
    })
}

/// The deterministic closure: componentwise cubic, no noise.
#[derive(Debug, Clone)]
pub struct DeterministicClosure {
    coeffs: CubicCoeffs,
}

impl DeterministicClosure {
    pub fn new(coeffs: CubicCoeffs) -> Self {
        Self { coeffs }
    }
}

impl Closure for DeterministicClosure {
    fn subgrid_into(&mut self, x: &[f64], _step: usize, out: &mut [f64]) {
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = eval_cubic(&self.coeffs, xi);
        }
    }

    fn reset(&mut self, _seed: u64) {}

    fn is_stochastic(&self) -> bool {
        false
    }

    fn clone_box(&self) -> Box<dyn Closure> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_cubic() {
        // Noiseless synthetic data must be reproduced to near machine
        // precision by a stable solver.
        let truth = CubicCoeffs { a: 0.1, b: -0.2, c: 1.5, d: 3.0 };
        let x: Vec<f64> = (0..200).map(|i| -6.0 + 0.1 * i as f64).collect();
        let u: Vec<f64> = x.iter().map(|&xi| eval_cubic(&truth, xi)).collect();
        let fit = fit_cubic_lsq(&x, &u).unwrap();
        for (got, want) in fit.as_array().iter().zip(truth.as_array()) {
            assert!((got - want).abs() < 1e-8, "coefficient {got} vs {want}");
        }
    }

    #[test]
    fn constant_data_gives_constant_polynomial() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.3 - 5.0).collect();
        let u = vec![5.0; 50];
        let fit = fit_cubic_lsq(&x, &u).unwrap();
        assert!(fit.a.abs() < 1e-10);
        assert!(fit.b.abs() < 1e-10);
        assert!(fit.c.abs() < 1e-10);
        assert!((fit.d - 5.0).abs() < 1e-10);
    }

    #[test]
    fn horner_matches_direct_powers() {
        let c = CubicCoeffs { a: 0.34, b: -1.3, c: 0.05, d: -2.0 };
        let mut x: f64 = -9.0;
        while x < 14.0 {
            let direct = c.a * x.powi(3) + c.b * x.powi(2) + c.c * x + c.d;
            assert!((eval_cubic(&c, x) - direct).abs() <= 1e-12 * direct.abs().max(1.0));
            x += 0.37;
        }
    }

    #[test]
    fn rank_deficient_design_errors() {
        // A single repeated x value cannot pin down four coefficients.
        let x = vec![2.0; 10];
        let u = vec![1.0; 10];
        assert!(matches!(
            fit_cubic_lsq(&x, &u),
            Err(Error::RankDeficient { .. })
        ));
    }
}
