//! Reduced single-scale integration (Heun's method) driven by a subgrid
//! closure.

use ndarray::{Array2, Array3};

use super::{check_blowup, check_finite, output_steps, steps_per_output, IntegratorConfig, L96Params, Trajectory};
use crate::closures::{Closure, ClosureBank};
use crate::Result;

/// Resolved-scale advection, damping, and forcing:
/// `-X_{k-1}(X_{k-2} - X_{k+1}) - X_k + F` (zero-based, cyclic).
///
/// The reduced tendency is this minus the parameterized subgrid tendency.
pub fn advection_into(p: &L96Params, x: &[f64], out: &mut [f64]) {
    let kd = p.k;
    debug_assert_eq!(x.len(), kd);
    debug_assert_eq!(out.len(), kd);
    for k in 0..kd {
        let km1 = if k == 0 { kd - 1 } else { k - 1 };
        let km2 = if k < 2 { k + kd - 2 } else { k - 2 };
        let kp1 = if k + 1 == kd { 0 } else { k + 1 };
        out[k] = -x[km1] * (x[km2] - x[kp1]) - x[k] + p.f;
    }
}

/// Integrate the reduced model from the large-scale state `init` over
/// `horizon`, recording every `cfg.dt_out`.
///
/// Each Heun step samples the closure once and holds that subgrid tendency
/// fixed across both stages, so stochastic closures behave like piecewise-
/// constant forcing over one step. The closure is *not* reset here; seed it
/// beforehand via [`Closure::reset`] to select the noise realization.
pub fn integrate_reduced(
    p: &L96Params,
    cfg: &IntegratorConfig,
    init: &[f64],
    closure: &mut dyn Closure,
    horizon: f64,
) -> Result<Trajectory> {
    p.validate()?;
    cfg.validate()?;
    if init.len() != p.k {
        return Err(crate::Error::InvalidConfig(format!(
            "initial state has width {}, expected {}",
            init.len(),
            p.k
        )));
    }
    check_finite(init, 0.0)?;

    let n_out = output_steps(horizon, cfg.dt_out)?;
    let sub = steps_per_output(cfg.dt_out, cfg.dt_reduced)?;
    let kd = p.k;
    let dt = cfg.dt_reduced;

    let mut states = Array2::zeros((n_out + 1, kd));
    let mut x = init.to_vec();
    let mut u = vec![0.0; kd];
    let mut f1 = vec![0.0; kd];
    let mut f2 = vec![0.0; kd];
    let mut xm = vec![0.0; kd];

    states.row_mut(0).assign(&ndarray::ArrayView1::from(&x[..]));
    let mut step = 0usize;
    for out_step in 0..n_out {
        for _ in 0..sub {
            closure.subgrid_into(&x, step, &mut u);
            advection_into(p, &x, &mut f1);
            for k in 0..kd {
                f1[k] -= u[k];
                xm[k] = x[k] + dt * f1[k];
            }
            advection_into(p, &xm, &mut f2);
            for k in 0..kd {
                f2[k] -= u[k];
                x[k] += 0.5 * dt * (f1[k] + f2[k]);
            }
            step += 1;
        }
        let t = (out_step + 1) as f64 * cfg.dt_out;
        check_blowup(&x, t, cfg.blowup_threshold)?;
        states
            .row_mut(out_step + 1)
            .assign(&ndarray::ArrayView1::from(&x[..]));
    }

    Ok(Trajectory {
        t0: 0.0,
        dt: cfg.dt_out,
        states,
    })
}

/// Integrate a bank of reduced-model members in lockstep from per-member
/// initial states, recording the resolved state every
/// `store_stride · dt_out`.
///
/// Row `b` of `inits` seeds member `b`; seed each member's noise stream
/// beforehand via [`crate::closures::ClosureBank::reset_member`]. The bank
/// is sampled once per reduced step for all members at once, which is what
/// makes long stationary runs of batch-friendly closures affordable. Any
/// member exceeding the blow-up threshold aborts the whole run: callers use
/// this for climatology/correlation series that must be complete.
///
/// Returns `(member, time, component)` states; row times are
/// `r · store_stride · dt_out`.
pub fn integrate_reduced_bank(
    p: &L96Params,
    cfg: &IntegratorConfig,
    inits: &Array2<f64>,
    bank: &mut dyn ClosureBank,
    horizon: f64,
    store_stride: usize,
) -> Result<Array3<f64>> {
    p.validate()?;
    cfg.validate()?;
    let (n_members, width) = inits.dim();
    if n_members == 0 || width != p.k {
        return Err(crate::Error::InvalidConfig(format!(
            "initial states shaped {:?}, expected (≥1, {})",
            inits.dim(),
            p.k
        )));
    }
    if bank.members() != n_members {
        return Err(crate::Error::Misaligned(format!(
            "bank has {} member slots for {} initial states",
            bank.members(),
            n_members
        )));
    }
    for row in inits.rows() {
        check_finite(row.as_slice().expect("contiguous row"), 0.0)?;
    }
    let n_out = output_steps(horizon, cfg.dt_out)?;
    let sub = steps_per_output(cfg.dt_out, cfg.dt_reduced)?;
    if store_stride == 0 || n_out % store_stride != 0 {
        return Err(crate::Error::InvalidConfig(format!(
            "store stride {store_stride} does not divide the {n_out} output steps"
        )));
    }
    let n_stored = n_out / store_stride + 1;
    let kd = p.k;
    let dt = cfg.dt_reduced;

    let mut out = Array3::zeros((n_members, n_stored, kd));
    let mut states = inits.clone();
    let mut u = Array2::<f64>::zeros((n_members, kd));
    let mut f1 = vec![0.0; kd];
    let mut f2 = vec![0.0; kd];
    let mut xm = vec![0.0; kd];

    for b in 0..n_members {
        out.slice_mut(ndarray::s![b, 0, ..]).assign(&states.row(b));
    }
    let mut step = 0usize;
    for out_step in 1..=n_out {
        for _ in 0..sub {
            bank.subgrid_batch(&states, step, &mut u);
            for b in 0..n_members {
                let x = states.row(b);
                let x = x.as_slice().expect("contiguous row");
                advection_into(p, x, &mut f1);
                for k in 0..kd {
                    f1[k] -= u[[b, k]];
                    xm[k] = x[k] + dt * f1[k];
                }
                advection_into(p, &xm, &mut f2);
                let mut x = states.row_mut(b);
                for k in 0..kd {
                    f2[k] -= u[[b, k]];
                    x[k] += 0.5 * dt * (f1[k] + f2[k]);
                }
            }
            step += 1;
        }
        let t = out_step as f64 * cfg.dt_out;
        for b in 0..n_members {
            check_blowup(states.row(b).as_slice().expect("contiguous row"), t, cfg.blowup_threshold)?;
        }
        if out_step % store_stride == 0 {
            let r = out_step / store_stride;
            for b in 0..n_members {
                out.slice_mut(ndarray::s![b, r, ..]).assign(&states.row(b));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closures::{Ar1Closure, Ar1Params, CubicCoeffs, SerialBank};
    use crate::seed::{derive, Role};

    /// A lockstep bank run of independent closure instances is bitwise
    /// identical to integrating each member on its own: batching is an
    /// evaluation-order optimization, not a semantic change.
    #[test]
    fn bank_run_matches_member_by_member_integration() {
        let p = L96Params::default();
        let cfg = IntegratorConfig::default();
        let coeffs = CubicCoeffs { a: 0.3, b: 1.1, c: -0.01, d: -0.02 };
        let ar1 = Ar1Params { rho: 0.95, sigma_e: 0.8 };
        let proto = Ar1Closure::new(coeffs, ar1);

        let n = 3;
        let mut inits = Array2::zeros((n, p.k));
        for b in 0..n {
            for k in 0..p.k {
                inits[[b, k]] = 2.0 + b as f64 - 0.3 * k as f64;
            }
        }

        let mut bank = SerialBank::new(&proto, n);
        for b in 0..n {
            bank.reset_member(b, derive(7, Role::PathNoise, &[b as u64]));
        }
        let batch = integrate_reduced_bank(&p, &cfg, &inits, &mut bank, 1.0, 4).unwrap();

        for b in 0..n {
            let mut single: Box<dyn Closure> = Box::new(proto.clone());
            single.reset(derive(7, Role::PathNoise, &[b as u64]));
            let traj = integrate_reduced(
                &p,
                &cfg,
                inits.row(b).as_slice().unwrap(),
                single.as_mut(),
                1.0,
            )
            .unwrap();
            for (r, row) in batch.slice(ndarray::s![b, .., ..]).rows().into_iter().enumerate() {
                let full_row = traj.states.row(r * 4);
                for (a, e) in row.iter().zip(full_row.iter()) {
                    assert_eq!(a, e, "member {b} stored row {r}");
                }
            }
        }
    }

    /// A diverging member aborts the whole bank run with the blow-up time.
    #[test]
    fn bank_run_reports_divergence() {
        let p = L96Params::default();
        let cfg = IntegratorConfig { blowup_threshold: 10.0, ..Default::default() };
        let proto = crate::closures::DeterministicClosure::new(CubicCoeffs {
            a: -200.0,
            b: 0.0,
            c: 0.0,
            d: 0.0,
        });
        let inits = Array2::from_elem((2, p.k), 2.0);
        let mut bank = SerialBank::new(&proto, 2);
        let err = integrate_reduced_bank(&p, &cfg, &inits, &mut bank, 1.0, 1).unwrap_err();
        assert!(matches!(err, crate::Error::Divergence { .. }), "{err}");
    }
}
