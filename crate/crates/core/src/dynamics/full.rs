//! Fully resolved two-scale integration (classical fourth-order Runge–Kutta).

use ndarray::Array2;

use super::{check_blowup, check_finite, output_steps, steps_per_output, IntegratorConfig, L96Params, Trajectory};
use crate::seed::NoiseStream;
use crate::Result;

/// Coupled tendency of the packed state `[X | Y]`.
///
/// Large scale: `dX_k = -X_{k-1}(X_{k-2} - X_{k+1}) - X_k + F - (hc/b) Σ_j Y_j`
/// with the sum over the J small-scale variables attached to sector `k`.
/// Small scale: `dY_j = -cb Y_{j+1}(Y_{j+2} - Y_{j-1}) - c Y_j + (hc/b) X_{⌊j/J⌋}`
/// (zero-based indices, cyclic in both blocks).
pub fn full_tendency_into(p: &L96Params, state: &[f64], out: &mut [f64]) {
    let kd = p.k;
    let jd = p.j;
    let ny = kd * jd;
    debug_assert_eq!(state.len(), kd + ny);
    debug_assert_eq!(out.len(), kd + ny);

    let (x, y) = state.split_at(kd);
    let (dx, dy) = out.split_at_mut(kd);
    let hcb = p.h * p.c / p.b;

    for k in 0..kd {
        let km1 = if k == 0 { kd - 1 } else { k - 1 };
        let km2 = if k < 2 { k + kd - 2 } else { k - 2 };
        let kp1 = if k + 1 == kd { 0 } else { k + 1 };
        let sum_y: f64 = y[k * jd..(k + 1) * jd].iter().sum();
        dx[k] = -x[km1] * (x[km2] - x[kp1]) - x[k] + p.f - hcb * sum_y;
    }

    let cb = p.c * p.b;
    for j in 0..ny {
        let jp1 = if j + 1 >= ny { j + 1 - ny } else { j + 1 };
        let jp2 = if j + 2 >= ny { j + 2 - ny } else { j + 2 };
        let jm1 = if j == 0 { ny - 1 } else { j - 1 };
        dy[j] = -cb * y[jp1] * (y[jp2] - y[jm1]) - p.c * y[j] + hcb * x[j / jd];
    }
}

/// Which components an integration records at output times.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Record {
    /// Only the large-scale block (width K).
    LargeScale,
    /// The packed state (width K + KJ).
    Full,
}

struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(width: usize) -> Self {
        Self {
            k1: vec![0.0; width],
            k2: vec![0.0; width],
            k3: vec![0.0; width],
            k4: vec![0.0; width],
            tmp: vec![0.0; width],
        }
    }

    /// One in-place classical Runge–Kutta step of the coupled system.
    fn step(&mut self, p: &L96Params, state: &mut [f64], dt: f64) {
        full_tendency_into(p, state, &mut self.k1);
        for i in 0..state.len() {
            self.tmp[i] = state[i] + 0.5 * dt * self.k1[i];
        }
        full_tendency_into(p, &self.tmp, &mut self.k2);
        for i in 0..state.len() {
            self.tmp[i] = state[i] + 0.5 * dt * self.k2[i];
        }
        full_tendency_into(p, &self.tmp, &mut self.k3);
        for i in 0..state.len() {
            self.tmp[i] = state[i] + dt * self.k3[i];
        }
        full_tendency_into(p, &self.tmp, &mut self.k4);
        let w = dt / 6.0;
        for i in 0..state.len() {
            state[i] += w * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Integrate the coupled system from `init` (packed `[X | Y]`) over
/// `horizon` model time units, recording every `cfg.dt_out`.
///
/// The returned trajectory has `horizon / dt_out + 1` rows, the first being
/// the initial state at `t0 = 0`. Blow-up is checked at every output time.
pub fn integrate_full(
    p: &L96Params,
    cfg: &IntegratorConfig,
    init: &[f64],
    horizon: f64,
    record: Record,
) -> Result<Trajectory> {
    p.validate()?;
    cfg.validate()?;
    if init.len() != p.full_width() {
        return Err(crate::Error::InvalidConfig(format!(
            "initial state has width {}, expected {}",
            init.len(),
            p.full_width()
        )));
    }
    check_finite(init, 0.0)?;

    let n_out = output_steps(horizon, cfg.dt_out)?;
    let sub = steps_per_output(cfg.dt_out, cfg.dt_full)?;
    let rec_width = match record {
        Record::LargeScale => p.k,
        Record::Full => p.full_width(),
    };

    let mut states = Array2::zeros((n_out + 1, rec_width));
    let mut state = init.to_vec();
    let mut rk = Rk4::new(state.len());

    states.row_mut(0).assign(&ndarray::ArrayView1::from(&state[..rec_width]));
    for step in 0..n_out {
        for _ in 0..sub {
            rk.step(p, &mut state, cfg.dt_full);
        }
        let t = (step + 1) as f64 * cfg.dt_out;
        check_blowup(&state, t, cfg.blowup_threshold)?;
        states
            .row_mut(step + 1)
            .assign(&ndarray::ArrayView1::from(&state[..rec_width]));
    }

    Ok(Trajectory {
        t0: 0.0,
        dt: cfg.dt_out,
        states,
    })
}

/// Advance a packed state in place over `horizon` without recording.
pub fn advance_full(
    p: &L96Params,
    cfg: &IntegratorConfig,
    state: &mut [f64],
    horizon: f64,
) -> Result<()> {
    let n_out = output_steps(horizon, cfg.dt_out)?;
    let sub = steps_per_output(cfg.dt_out, cfg.dt_full)?;
    let mut rk = Rk4::new(state.len());
    for step in 0..n_out {
        for _ in 0..sub {
            rk.step(p, state, cfg.dt_full);
        }
        check_blowup(state, (step + 1) as f64 * cfg.dt_out, cfg.blowup_threshold)?;
    }
    Ok(())
}

/// Draw a random initial condition and integrate it onto the attractor.
///
/// Components start from `X_k ~ N(F/4, 1)` and `Y_j ~ N(0, 0.1)`; the
/// transient is discarded by integrating for `duration` (20 MTU is ample
/// for the standard parameters). Returns the packed on-attractor state.
pub fn spin_up(
    p: &L96Params,
    cfg: &IntegratorConfig,
    seed: u64,
    duration: f64,
) -> Result<Vec<f64>> {
    p.validate()?;
    cfg.validate()?;
    let mut noise = NoiseStream::from_seed(seed);
    let mut state = vec![0.0; p.full_width()];
    for v in state[..p.k].iter_mut() {
        *v = noise.normal(p.f / 4.0, 1.0);
    }
    for v in state[p.k..].iter_mut() {
        *v = noise.normal(0.0, 0.1);
    }
    advance_full(p, cfg, &mut state, duration)?;
    Ok(state)
}
