//! Hierarchically seeded forecast ensembles.
//!
//! Initial states are harvested from a long truth run at a fixed spacing,
//! perturbed with isotropic Gaussian noise on the resolved components, and
//! integrated under a reduced model. In `Separated` mode members are indexed
//! by (perturbation member j, model realization m) so the two uncertainty
//! sources can be disentangled downstream; in mixed modes a single member
//! pool carries both sources at once.
//!
//! Every random stream is derived from the run's master seed along a
//! (role, index…) path: perturbations by (i, j), path noise by (i, j, m),
//! posterior coefficient draws by (i, m). Enlarging one axis therefore
//! leaves the streams on the other axes untouched.

use std::io::{Read as IoRead, Write as IoWrite};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, Array4};
use serde::{Deserialize, Serialize};

use crate::closures::Checkpoint;
use crate::dynamics::{
    advection_into, integrate_full, output_steps, steps_per_output, IntegratorConfig, L96Params,
    Record, Trajectory,
};
use crate::flows::FlowSampler;
use crate::seed::{derive, NoiseStream, Role};
use crate::{Error, Result};

/// Member organization of an ensemble run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    /// Factorial (j, m) design: `n_ens` perturbation members crossed with
    /// `n_model` model realizations.
    Separated,
    /// One pool of `n_ens · n_model` members, each with its own
    /// perturbation, path noise, and model draw.
    MixedIndependent,
    /// One pool reusing exactly the separated run's seed layout, so member
    /// `j·n_model + m` is bit-identical to separated member (j, m). Used to
    /// verify that pooled and factorial bookkeeping agree.
    MixedMatched,
}

/// Size, spacing, and seeding of an ensemble experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// Number of initial states.
    pub n_init: usize,
    /// Perturbation members per initial state.
    pub n_ens: usize,
    /// Model realizations per initial state.
    pub n_model: usize,
    /// Spacing (MTU) between harvested initial states.
    pub spacing: f64,
    /// Perturbation standard deviation as a fraction of the climatological
    /// standard deviation.
    pub pert_frac: f64,
    /// Forecast horizon (MTU).
    pub horizon: f64,
    /// Record every this many output steps.
    pub store_stride: usize,
    /// Master seed of the experiment.
    pub seed: u64,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_init == 0 || self.n_ens == 0 || self.n_model == 0 {
            return Err(Error::InvalidConfig("ensemble axes must be nonempty".into()));
        }
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(Error::InvalidConfig("initial-state spacing must be positive".into()));
        }
        if !(self.pert_frac.is_finite() && self.pert_frac >= 0.0) {
            return Err(Error::InvalidConfig("perturbation fraction must be ≥ 0".into()));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidConfig("horizon must be positive".into()));
        }
        if self.store_stride == 0 {
            return Err(Error::InvalidConfig("store stride must be ≥ 1".into()));
        }
        Ok(())
    }

    /// Total members per initial state.
    pub fn members(&self) -> usize {
        self.n_ens * self.n_model
    }
}

/// A member whose trajectory left the admissible region; its stored rows
/// are NaN from `time` onward and it is excluded from statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemberFailure {
    pub init: usize,
    pub ens: usize,
    pub model: usize,
    pub time: f64,
}

/// Forecast ensemble: member states on a strided time grid plus the
/// matching unperturbed truth trajectories.
///
/// `data` is shaped `(i, member, t, k)`. For separated cubes member
/// `j·n_model + m` is perturbation member `j` under model realization `m`;
/// mixed cubes have `n_model = 1` and a flat member pool.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleCube {
    pub data: Array4<f64>,
    /// Unperturbed truth per initial state on the same time grid, `(i, t, k)`.
    pub truth: Array3<f64>,
    /// Times (MTU since the forecast start) of the stored rows.
    pub times: Vec<f64>,
    pub n_ens: usize,
    pub n_model: usize,
    pub mode: EnsembleMode,
    /// Perturbation standard deviation in state units.
    pub pert_std: f64,
    pub sigma_clim: f64,
    pub seed: u64,
    pub closure_kind: String,
    pub sampler_name: String,
    pub failures: Vec<MemberFailure>,
}

impl EnsembleCube {
    pub fn n_init(&self) -> usize {
        self.data.dim().0
    }

    pub fn n_members(&self) -> usize {
        self.data.dim().1
    }

    pub fn n_times(&self) -> usize {
        self.data.dim().2
    }

    pub fn k(&self) -> usize {
        self.data.dim().3
    }

    pub fn is_separated(&self) -> bool {
        self.mode == EnsembleMode::Separated
    }

    /// Flat member index of (perturbation member, model realization).
    pub fn member_index(&self, j: usize, m: usize) -> usize {
        j * self.n_model + m
    }

    pub fn value(&self, i: usize, j: usize, m: usize, t: usize, k: usize) -> f64 {
        self.data[[i, self.member_index(j, m), t, k]]
    }

    /// Fraction of members that failed.
    pub fn failure_fraction(&self) -> f64 {
        self.failures.len() as f64 / (self.n_init() * self.n_members()) as f64
    }

    /// Initial states (by index i) with at least one failed member.
    pub fn tainted_inits(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.failures.iter().map(|f| f.init).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Index of the stored row at time `t` (within 1e-9), if present.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        time_index(&self.times, t)
    }

    /// Persist as `{base}.bin` (raw little-endian f64: data then truth) plus
    /// a `{base}.json` sidecar describing shapes and provenance.
    pub fn save(&self, base: &Path) -> Result<(PathBuf, PathBuf)> {
        let bin_path = base.with_extension("bin");
        let json_path = base.with_extension("json");
        let mut w = std::io::BufWriter::new(std::fs::File::create(&bin_path)?);
        for v in self.data.iter().chain(self.truth.iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        let sidecar = CubeSidecar {
            shape: {
                let (a, b, c, d) = self.data.dim();
                [a, b, c, d]
            },
            truth_shape: {
                let (a, b, c) = self.truth.dim();
                [a, b, c]
            },
            times: self.times.clone(),
            n_ens: self.n_ens,
            n_model: self.n_model,
            mode: self.mode,
            pert_std: self.pert_std,
            sigma_clim: self.sigma_clim,
            seed: self.seed,
            closure_kind: self.closure_kind.clone(),
            sampler_name: self.sampler_name.clone(),
            failures: self.failures.clone(),
        };
        std::fs::write(&json_path, serde_json::to_string_pretty(&sidecar)?)?;
        Ok((bin_path, json_path))
    }

    pub fn load(base: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(base.with_extension("json"))?;
        let sidecar: CubeSidecar = serde_json::from_str(&text)?;
        let n_data: usize = sidecar.shape.iter().product();
        let n_truth: usize = sidecar.truth_shape.iter().product();
        let mut r = std::io::BufReader::new(std::fs::File::open(base.with_extension("bin"))?);
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != (n_data + n_truth) * 8 {
            return Err(Error::CsvParse(format!(
                "cube payload has {} bytes, sidecar implies {}",
                bytes.len(),
                (n_data + n_truth) * 8
            )));
        }
        let vals: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let [a, b, c, d] = sidecar.shape;
        let [ta, tb, tc] = sidecar.truth_shape;
        let data = Array4::from_shape_vec((a, b, c, d), vals[..n_data].to_vec())
            .map_err(|e| Error::CsvParse(e.to_string()))?;
        let truth = Array3::from_shape_vec((ta, tb, tc), vals[n_data..].to_vec())
            .map_err(|e| Error::CsvParse(e.to_string()))?;
        Ok(Self {
            data,
            truth,
            times: sidecar.times,
            n_ens: sidecar.n_ens,
            n_model: sidecar.n_model,
            mode: sidecar.mode,
            pert_std: sidecar.pert_std,
            sigma_clim: sidecar.sigma_clim,
            seed: sidecar.seed,
            closure_kind: sidecar.closure_kind,
            sampler_name: sidecar.sampler_name,
            failures: sidecar.failures,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CubeSidecar {
    shape: [usize; 4],
    truth_shape: [usize; 3],
    times: Vec<f64>,
    n_ens: usize,
    n_model: usize,
    mode: EnsembleMode,
    pert_std: f64,
    sigma_clim: f64,
    seed: u64,
    closure_kind: String,
    sampler_name: String,
    failures: Vec<MemberFailure>,
}

/// Stored-row index of time `t` on a grid, within 1e-9.
pub fn time_index(times: &[f64], t: f64) -> Option<usize> {
    times.iter().position(|&v| (v - t).abs() < 1e-9)
}

/// Extract `n_init` packed states from a truth run, one every `spacing`
/// MTU starting at the first row. The run must be long enough and sampled
/// commensurately with the spacing.
pub fn sample_perfect_states(truth: &Trajectory, n_init: usize, spacing: f64) -> Result<Vec<Vec<f64>>> {
    if n_init == 0 {
        return Err(Error::InvalidConfig("need at least one initial state".into()));
    }
    let stride = steps_per_output(spacing, truth.dt)?;
    let needed = (n_init - 1) * stride + 1;
    if truth.len() < needed {
        return Err(Error::TooShort {
            needed,
            got: truth.len(),
        });
    }
    Ok((0..n_init)
        .map(|i| truth.states.row(i * stride).to_vec())
        .collect())
}

/// Add isotropic Gaussian noise of standard deviation `pert_std` to every
/// component of `x`. The stream is advanced by `x.len()` draws even when
/// `pert_std` is zero, so the perturbation pattern is independent of its
/// amplitude; zero amplitude leaves `x` bit-identical.
pub fn perturb(x: &mut [f64], pert_std: f64, stream: &mut NoiseStream) {
    for v in x.iter_mut() {
        let z = stream.standard_normal();
        *v += pert_std * z;
    }
}

/// Run a reduced-model forecast ensemble from `perfect_states`.
///
/// `truth` holds the matching unperturbed truth trajectories at the
/// integrator's output resolution, shaped `(n_init, ≥ horizon/dt_out + 1, K)`;
/// it is strided onto the stored time grid. Members that blow up are
/// recorded in `failures`, their stored rows NaN from the failure time on,
/// and the run continues.
#[allow(clippy::too_many_arguments)]
pub fn run_ensemble(
    p: &L96Params,
    icfg: &IntegratorConfig,
    cfg: &EnsembleConfig,
    checkpoint: &Checkpoint,
    sampler: FlowSampler,
    perfect_states: &[Vec<f64>],
    truth: &Array3<f64>,
    sigma_clim: f64,
    mode: EnsembleMode,
) -> Result<EnsembleCube> {
    p.validate()?;
    icfg.validate()?;
    cfg.validate()?;
    if perfect_states.len() < cfg.n_init {
        return Err(Error::TooShort {
            needed: cfg.n_init,
            got: perfect_states.len(),
        });
    }
    let kd = p.k;
    for s in perfect_states.iter().take(cfg.n_init) {
        if s.len() < kd {
            return Err(Error::InvalidConfig(format!(
                "initial state has width {}, expected at least {kd}",
                s.len()
            )));
        }
    }
    if !(sigma_clim.is_finite() && sigma_clim > 0.0) {
        return Err(Error::InvalidConfig("climatological spread must be positive".into()));
    }
    let n_out = output_steps(cfg.horizon, icfg.dt_out)?;
    let sub = steps_per_output(icfg.dt_out, icfg.dt_reduced)?;
    if n_out % cfg.store_stride != 0 {
        return Err(Error::InvalidConfig(format!(
            "store stride {} does not divide the {} output steps",
            cfg.store_stride, n_out
        )));
    }
    let n_stored = n_out / cfg.store_stride + 1;
    let (ti, tt, tk) = truth.dim();
    if ti < cfg.n_init || tt < n_out + 1 || tk != kd {
        return Err(Error::Misaligned(format!(
            "truth shaped {:?} cannot cover {} initial states over {} output rows of width {kd}",
            truth.dim(),
            cfg.n_init,
            n_out + 1
        )));
    }

    let b_total = cfg.members();
    let pert_std = cfg.pert_frac * sigma_clim;
    let dt = icfg.dt_reduced;
    let mut data = Array4::zeros((cfg.n_init, b_total, n_stored, kd));
    let mut truth_out = Array3::zeros((cfg.n_init, n_stored, kd));
    let mut failures = Vec::new();

    let mut states = Array2::<f64>::zeros((b_total, kd));
    let mut u = Array2::<f64>::zeros((b_total, kd));
    let mut f1 = vec![0.0; kd];
    let mut f2 = vec![0.0; kd];
    let mut xm = vec![0.0; kd];
    let mut eta = vec![0.0; kd];

    for i in 0..cfg.n_init {
        let mut bank = checkpoint.bank(sampler, b_total)?;
        let mut alive = vec![true; b_total];

        // Seed members and build perturbed initial states.
        match mode {
            EnsembleMode::Separated | EnsembleMode::MixedMatched => {
                for j in 0..cfg.n_ens {
                    let mut pstream =
                        NoiseStream::derived(cfg.seed, Role::Perturbation, &[i as u64, j as u64]);
                    pstream.fill_standard_normal(&mut eta);
                    for m in 0..cfg.n_model {
                        let b = j * cfg.n_model + m;
                        for d in 0..kd {
                            states[[b, d]] = perfect_states[i][d] + pert_std * eta[d];
                        }
                        bank.reset_member(
                            b,
                            derive(cfg.seed, Role::PathNoise, &[i as u64, j as u64, m as u64]),
                        );
                        bank.draw_model_member(
                            b,
                            derive(cfg.seed, Role::CoefficientDraw, &[i as u64, m as u64]),
                        );
                    }
                }
            }
            EnsembleMode::MixedIndependent => {
                for b in 0..b_total {
                    let mut pstream =
                        NoiseStream::derived(cfg.seed, Role::Perturbation, &[i as u64, b as u64]);
                    pstream.fill_standard_normal(&mut eta);
                    for d in 0..kd {
                        states[[b, d]] = perfect_states[i][d] + pert_std * eta[d];
                    }
                    bank.reset_member(
                        b,
                        derive(cfg.seed, Role::PathNoise, &[i as u64, b as u64, 0]),
                    );
                    bank.draw_model_member(
                        b,
                        derive(cfg.seed, Role::CoefficientDraw, &[i as u64, b as u64]),
                    );
                }
            }
        }

        for b in 0..b_total {
            for d in 0..kd {
                data[[i, b, 0, d]] = states[[b, d]];
            }
        }
        for r in 0..n_stored {
            let row = r * cfg.store_stride;
            for d in 0..kd {
                truth_out[[i, r, d]] = truth[[i, row, d]];
            }
        }

        // Lockstep integration of all members: one closure sample per
        // reduced step, held across both Heun stages.
        let mut step = 0usize;
        for out_step in 1..=n_out {
            for _ in 0..sub {
                bank.subgrid_batch(&states, step, &mut u);
                for b in 0..b_total {
                    if !alive[b] {
                        continue;
                    }
                    let x = states.row(b);
                    let x = x.as_slice().expect("contiguous row");
                    advection_into(p, x, &mut f1);
                    for d in 0..kd {
                        f1[d] -= u[[b, d]];
                        xm[d] = x[d] + dt * f1[d];
                    }
                    advection_into(p, &xm, &mut f2);
                    let mut x = states.row_mut(b);
                    for d in 0..kd {
                        f2[d] -= u[[b, d]];
                        x[d] += 0.5 * dt * (f1[d] + f2[d]);
                    }
                }
                step += 1;
            }
            let t = out_step as f64 * icfg.dt_out;
            for b in 0..b_total {
                if !alive[b] {
                    continue;
                }
                let bad = states
                    .row(b)
                    .iter()
                    .any(|v| !v.is_finite() || v.abs() > icfg.blowup_threshold);
                if bad {
                    alive[b] = false;
                    let (ens, model) = match mode {
                        EnsembleMode::Separated => (b / cfg.n_model, b % cfg.n_model),
                        _ => (b, 0),
                    };
                    failures.push(MemberFailure {
                        init: i,
                        ens,
                        model,
                        time: t,
                    });
                }
            }
            if out_step % cfg.store_stride == 0 {
                let r = out_step / cfg.store_stride;
                for b in 0..b_total {
                    for d in 0..kd {
                        data[[i, b, r, d]] = if alive[b] { states[[b, d]] } else { f64::NAN };
                    }
                }
            }
        }
    }

    let times: Vec<f64> = (0..n_stored)
        .map(|r| r as f64 * cfg.store_stride as f64 * icfg.dt_out)
        .collect();
    let (n_ens, n_model) = match mode {
        EnsembleMode::Separated => (cfg.n_ens, cfg.n_model),
        _ => (b_total, 1),
    };
    Ok(EnsembleCube {
        data,
        truth: truth_out,
        times,
        n_ens,
        n_model,
        mode,
        pert_std,
        sigma_clim,
        seed: cfg.seed,
        closure_kind: checkpoint.kind_name().to_string(),
        sampler_name: sampler.name().to_string(),
        failures,
    })
}

/// Run a perturbed-initial-condition ensemble of the fully resolved system
/// (no closure): the reference for intrinsic predictability. Perturbations
/// hit only the resolved components; the unresolved components start from
/// the perfect state. Returns `(i, j, t, k)` resolved states on the strided
/// grid plus the row times.
#[allow(clippy::too_many_arguments)]
pub fn run_truth_ensemble(
    p: &L96Params,
    icfg: &IntegratorConfig,
    n_init: usize,
    n_ens: usize,
    pert_frac: f64,
    horizon: f64,
    store_stride: usize,
    seed: u64,
    perfect_states: &[Vec<f64>],
    sigma_clim: f64,
) -> Result<(Array4<f64>, Vec<f64>)> {
    p.validate()?;
    icfg.validate()?;
    if n_init == 0 || n_ens == 0 {
        return Err(Error::InvalidConfig("ensemble axes must be nonempty".into()));
    }
    if perfect_states.len() < n_init {
        return Err(Error::TooShort {
            needed: n_init,
            got: perfect_states.len(),
        });
    }
    let width = p.full_width();
    let n_out = output_steps(horizon, icfg.dt_out)?;
    if store_stride == 0 || n_out % store_stride != 0 {
        return Err(Error::InvalidConfig(format!(
            "store stride {store_stride} does not divide the {n_out} output steps"
        )));
    }
    let n_stored = n_out / store_stride + 1;
    let pert_std = pert_frac * sigma_clim;
    let mut data = Array4::zeros((n_init, n_ens, n_stored, p.k));
    for i in 0..n_init {
        if perfect_states[i].len() != width {
            return Err(Error::InvalidConfig(format!(
                "perfect state {i} has width {}, expected packed width {width}",
                perfect_states[i].len()
            )));
        }
        for j in 0..n_ens {
            let mut state = perfect_states[i].clone();
            let mut stream =
                NoiseStream::derived(seed, Role::Perturbation, &[i as u64, j as u64]);
            perturb(&mut state[..p.k], pert_std, &mut stream);
            let traj = integrate_full(p, icfg, &state, horizon, Record::LargeScale)?;
            for r in 0..n_stored {
                let row = traj.states.row(r * store_stride);
                for d in 0..p.k {
                    data[[i, j, r, d]] = row[d];
                }
            }
        }
    }
    let times: Vec<f64> = (0..n_stored)
        .map(|r| r as f64 * store_stride as f64 * icfg.dt_out)
        .collect();
    Ok((data, times))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closures::{Ar1Params, Checkpoint, CubicCoeffs};
    use ndarray::Array2;

    fn toy_params() -> L96Params {
        L96Params::default()
    }

    fn toy_integrator() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    fn det_checkpoint() -> Checkpoint {
        Checkpoint::Deterministic {
            coeffs: CubicCoeffs {
                a: 0.1,
                b: 1.2,
                c: 0.02,
                d: -0.004,
            },
            residual_std: 1.0,
            dataset_sha256: "test".into(),
        }
    }

    fn ar1_checkpoint() -> Checkpoint {
        Checkpoint::PolyAr1 {
            coeffs: CubicCoeffs {
                a: 0.1,
                b: 1.2,
                c: 0.02,
                d: -0.004,
            },
            ar1: Ar1Params {
                rho: 0.95,
                sigma_e: 1.5,
            },
            dataset_sha256: "test".into(),
        }
    }

    /// Synthetic states near the attractor's scale.
    fn toy_states(n: usize, width: usize) -> Vec<Vec<f64>> {
        let mut stream = NoiseStream::from_seed(99);
        (0..n)
            .map(|_| (0..width).map(|_| stream.normal(2.0, 3.0)).collect())
            .collect()
    }

    fn toy_truth(n_init: usize, rows: usize, k: usize) -> Array3<f64> {
        let mut stream = NoiseStream::from_seed(7);
        let mut t = Array3::zeros((n_init, rows, k));
        for v in t.iter_mut() {
            *v = stream.normal(2.0, 3.0);
        }
        t
    }

    fn toy_config(seed: u64) -> EnsembleConfig {
        EnsembleConfig {
            n_init: 2,
            n_ens: 2,
            n_model: 3,
            spacing: 20.0,
            pert_frac: 0.05,
            horizon: 0.1,
            store_stride: 2,
            seed,
        }
    }

    #[test]
    fn perfect_states_ride_the_spacing_grid() {
        let states = Array2::from_shape_fn((11, 4), |(r, c)| (r * 10 + c) as f64);
        let truth = Trajectory {
            t0: 0.0,
            dt: 0.5,
            states,
        };
        let got = sample_perfect_states(&truth, 3, 2.0).unwrap();
        assert_eq!(got.len(), 3);
        // Spacing 2.0 at dt 0.5 → every fourth row.
        assert_eq!(got[0][0], 0.0);
        assert_eq!(got[1][0], 40.0);
        assert_eq!(got[2][0], 80.0);
        // Too short: 4 states would need row 12.
        assert!(matches!(
            sample_perfect_states(&truth, 4, 2.0),
            Err(Error::TooShort { .. })
        ));
        // Non-commensurate spacing.
        assert!(sample_perfect_states(&truth, 2, 0.7).is_err());
    }

    #[test]
    fn perturbation_amplitude_and_zero_case() {
        let mut stream = NoiseStream::from_seed(5);
        let n = 100_000;
        let mut samples = vec![0.0; n];
        perturb(&mut samples, 0.25, &mut stream);
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        let std = var.sqrt();
        assert!((std - 0.25).abs() < 0.25 * 0.01, "std {std}");
        assert!(mean.abs() < 3.0 * 0.25 / (n as f64).sqrt());

        // Zero amplitude: bit-identical state, stream still advances.
        let mut a = NoiseStream::from_seed(5);
        let mut b = NoiseStream::from_seed(5);
        let mut x = vec![1.25, -0.5, 3.0];
        perturb(&mut x, 0.0, &mut a);
        assert_eq!(x, vec![1.25, -0.5, 3.0]);
        let _ = (b.standard_normal(), b.standard_normal(), b.standard_normal());
        assert_eq!(a.standard_normal(), b.standard_normal());
    }

    #[test]
    fn deterministic_model_slices_are_bitwise_identical() {
        let p = toy_params();
        let icfg = toy_integrator();
        let cfg = toy_config(42);
        let states = toy_states(cfg.n_init, p.k);
        let truth = toy_truth(cfg.n_init, 21, p.k);
        let cube = run_ensemble(
            &p,
            &icfg,
            &cfg,
            &det_checkpoint(),
            crate::flows::FlowSampler::Iid,
            &states,
            &truth,
            5.0,
            EnsembleMode::Separated,
        )
        .unwrap();
        assert!(cube.failures.is_empty());
        for i in 0..cube.n_init() {
            for j in 0..cube.n_ens {
                for m in 1..cube.n_model {
                    for t in 0..cube.n_times() {
                        for d in 0..cube.k() {
                            assert_eq!(
                                cube.value(i, j, m, t, d).to_bits(),
                                cube.value(i, j, 0, t, d).to_bits()
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn reruns_and_round_trips_are_bitwise_identical() {
        let p = toy_params();
        let icfg = toy_integrator();
        let cfg = toy_config(1234);
        let states = toy_states(cfg.n_init, p.k);
        let truth = toy_truth(cfg.n_init, 21, p.k);
        let run = || {
            run_ensemble(
                &p,
                &icfg,
                &cfg,
                &ar1_checkpoint(),
                crate::flows::FlowSampler::Iid,
                &states,
                &truth,
                5.0,
                EnsembleMode::Separated,
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.data, b.data);
        assert_eq!(a.truth, b.truth);

        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("cube");
        a.save(&base).unwrap();
        let c = EnsembleCube::load(&base).unwrap();
        assert_eq!(a.data, c.data);
        assert_eq!(a.truth, c.truth);
        assert_eq!(a.times, c.times);
        assert_eq!(a.n_ens, c.n_ens);
        assert_eq!(a.mode, c.mode);
    }

    /// Growing the model axis must not disturb the perturbation or path
    /// streams of existing (j, m) members.
    #[test]
    fn model_axis_growth_leaves_existing_members_unchanged() {
        let p = toy_params();
        let icfg = toy_integrator();
        let states = toy_states(2, p.k);
        let truth = toy_truth(2, 21, p.k);
        let mut small = toy_config(77);
        small.n_model = 2;
        let mut large = toy_config(77);
        large.n_model = 3;
        let run = |cfg: &EnsembleConfig| {
            run_ensemble(
                &p,
                &icfg,
                cfg,
                &ar1_checkpoint(),
                crate::flows::FlowSampler::Iid,
                &states,
                &truth,
                5.0,
                EnsembleMode::Separated,
            )
            .unwrap()
        };
        let a = run(&small);
        let b = run(&large);
        for i in 0..2 {
            for j in 0..small.n_ens {
                for m in 0..small.n_model {
                    for t in 0..a.n_times() {
                        for d in 0..a.k() {
                            assert_eq!(
                                a.value(i, j, m, t, d).to_bits(),
                                b.value(i, j, m, t, d).to_bits()
                            );
                        }
                    }
                }
            }
        }
    }

    /// Matched mixed mode is the separated run relabeled as one pool.
    #[test]
    fn matched_mixed_reshuffles_separated_members() {
        let p = toy_params();
        let icfg = toy_integrator();
        let cfg = toy_config(2024);
        let states = toy_states(cfg.n_init, p.k);
        let truth = toy_truth(cfg.n_init, 21, p.k);
        let run = |mode| {
            run_ensemble(
                &p,
                &icfg,
                &cfg,
                &ar1_checkpoint(),
                crate::flows::FlowSampler::Iid,
                &states,
                &truth,
                5.0,
                mode,
            )
            .unwrap()
        };
        let sep = run(EnsembleMode::Separated);
        let mix = run(EnsembleMode::MixedMatched);
        assert_eq!(sep.data, mix.data);
        assert_eq!(mix.n_model, 1);
        assert_eq!(mix.n_ens, cfg.members());
        assert!(!mix.is_separated());
        // Independent mixed seeding differs.
        let ind = run(EnsembleMode::MixedIndependent);
        assert_ne!(sep.data, ind.data);
    }

    /// A single unperturbed full-system member reproduces the truth rows.
    #[test]
    fn unperturbed_truth_ensemble_matches_truth_run() {
        let p = toy_params();
        let icfg = toy_integrator();
        let state = crate::dynamics::spin_up(&p, &icfg, 3, 2.0).unwrap();
        let horizon = 0.2;
        let (data, times) = run_truth_ensemble(
            &p, &icfg, 1, 1, 0.0, horizon, 4, 11, std::slice::from_ref(&state), 5.0,
        )
        .unwrap();
        let truth = integrate_full(&p, &icfg, &state, horizon, Record::LargeScale).unwrap();
        assert_eq!(times.len(), data.dim().2);
        for (r, &t) in times.iter().enumerate() {
            let row = truth.states.row((t / icfg.dt_out).round() as usize);
            for d in 0..p.k {
                assert_eq!(data[[0, 0, r, d]].to_bits(), row[d].to_bits());
            }
        }
    }

    #[test]
    fn store_stride_must_divide_output_steps() {
        let p = toy_params();
        let icfg = toy_integrator();
        let mut cfg = toy_config(5);
        cfg.store_stride = 7; // horizon 0.1 → 20 output steps, 7 ∤ 20
        let states = toy_states(cfg.n_init, p.k);
        let truth = toy_truth(cfg.n_init, 21, p.k);
        let err = run_ensemble(
            &p,
            &icfg,
            &cfg,
            &det_checkpoint(),
            crate::flows::FlowSampler::Iid,
            &states,
            &truth,
            5.0,
            EnsembleMode::Separated,
        );
        assert!(err.is_err());
    }
}
