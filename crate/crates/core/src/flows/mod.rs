//! Conditional normalizing flows for the subgrid tendency.
//!
//! A flow models the conditional density p(U | X) of the diagnosed subgrid
//! tendency given the resolved state by pushing a base distribution through
//! a stack of affine coupling layers (and optionally an elementwise tail
//! warp). Variants differ in what they condition on and what the base
//! distribution is:
//!
//! * `normal` — condition on the current state, iid standard-normal base;
//! * `history` — condition on the current and `tau` lagged states;
//! * `base_ar1` — standard-normal base replaced by a trained AR(1) process,
//!   fit by maximizing the joint sequence likelihood;
//! * `tail` — adds the monotone tail warp after the coupling stack.
//!
//! Independently of training, latent sequences recovered from the training
//! data can be fit with a post-hoc AR(1) so that sampling carries temporal
//! correlation into the latent space ([`FlowSampler::LatentAr1`]).

pub mod adam;
pub mod coupling;
pub mod mlp;
pub mod tail;
mod train;

pub use train::{
    fit_latent_ar1, loss_and_grads_iid, loss_and_grads_seq, nll_iid_mean, nll_seq_total,
    train_flow,
};

use std::collections::VecDeque;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::closures::{Closure, ClosureBank};
use crate::seed::NoiseStream;
use crate::{Error, Result};
use coupling::{Coupling, CouplingCache, CouplingGrads};
use tail::{TailCache, TailGrads, TailParams};

const LN_2PI: f64 = 1.8378770664093453;

/// Flow family variant; see the module docs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowVariant {
    Normal,
    History { tau: usize },
    BaseAr1,
    Tail,
}

impl FlowVariant {
    pub fn name(&self) -> String {
        match self {
            FlowVariant::Normal => "normal".into(),
            FlowVariant::History { tau } => format!("hist{tau}"),
            FlowVariant::BaseAr1 => "base_ar1".into(),
            FlowVariant::Tail => "tail".into(),
        }
    }
}

/// How a flow closure draws its latent sequence when sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowSampler {
    /// Fresh standard-normal latents every step.
    Iid,
    /// Temporally correlated latents: the trained base recursion for
    /// `base_ar1` flows, the post-hoc fitted latent AR(1) otherwise.
    LatentAr1,
}

impl FlowSampler {
    pub fn name(&self) -> &'static str {
        match self {
            FlowSampler::Iid => "iid",
            FlowSampler::LatentAr1 => "latent_ar1",
        }
    }
}

/// Architecture and training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowConfig {
    /// State / tendency dimension.
    pub k: usize,
    pub variant: FlowVariant,
    /// Number of coupling layers (masks alternate).
    pub n_coupling: usize,
    /// Hidden width of the s/t networks.
    pub hidden: usize,
    /// Number of hidden layers in the s/t networks.
    pub depth: usize,
    /// Saturation bound for the coupling log-scales.
    pub s_cap: f64,
    pub lr: f64,
    pub batch: usize,
    pub max_epochs: usize,
    /// Early-stopping patience in epochs without validation improvement.
    pub patience: usize,
    /// Subsequence length for sequence-likelihood training (`base_ar1`).
    pub seq_len: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            k: 8,
            variant: FlowVariant::Normal,
            n_coupling: 4,
            hidden: 128,
            depth: 3,
            s_cap: 3.0,
            lr: 1e-3,
            batch: 2056,
            max_epochs: 100,
            patience: 8,
            seq_len: 256,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n_coupling == 0 || self.hidden == 0 || self.depth == 0 {
            return Err(Error::InvalidConfig("flow dimensions must be positive".into()));
        }
        if self.s_cap.is_nan() || self.s_cap <= 0.0 || self.lr.is_nan() || self.lr <= 0.0 {
            return Err(Error::InvalidConfig("s_cap and lr must be positive".into()));
        }
        if self.batch == 0 || self.max_epochs == 0 || self.seq_len < 2 {
            return Err(Error::InvalidConfig(
                "batch, max_epochs must be positive and seq_len ≥ 2".into(),
            ));
        }
        Ok(())
    }

    /// Dimension of the conditioning vector.
    pub fn cond_dim(&self) -> usize {
        match self.variant {
            FlowVariant::History { tau } => self.k * (tau + 1),
            _ => self.k,
        }
    }

    /// Number of lagged states the conditioning uses (0 = current only).
    pub fn tau(&self) -> usize {
        match self.variant {
            FlowVariant::History { tau } => tau,
            _ => 0,
        }
    }
}

/// Per-dimension affine standardization fitted on the training block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl Standardizer {
    pub fn identity(k: usize) -> Self {
        Self { mean: Array1::zeros(k), std: Array1::ones(k) }
    }

    pub fn fit(block: ArrayView2<'_, f64>) -> Result<Self> {
        let n = block.nrows();
        if n < 2 {
            return Err(Error::TooShort { needed: 2, got: n });
        }
        let mean = block.mean_axis(Axis(0)).expect("nonempty");
        let mut var = Array1::<f64>::zeros(block.ncols());
        for row in block.rows() {
            for (d, v) in row.iter().enumerate() {
                let dev = v - mean[d];
                var[d] += dev * dev;
            }
        }
        var.mapv_inplace(|v| (v / (n - 1) as f64).sqrt());
        if var.iter().any(|&s| s < 1e-12) {
            return Err(Error::ZeroVariance { context: "standardizer" });
        }
        Ok(Self { mean, std: var })
    }

    pub fn apply_rows(&self, rows: &Array2<f64>) -> Array2<f64> {
        (rows - &self.mean) / &self.std
    }

    pub fn invert_rows(&self, rows: &Array2<f64>) -> Array2<f64> {
        rows * &self.std + &self.mean
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for d in 0..x.len() {
            out[d] = (x[d] - self.mean[d]) / self.std[d];
        }
    }
}

/// Trained AR(1) base-process parameters (`base_ar1` variant), stored
/// unconstrained: ρ = tanh(r), σ = exp(log_sigma).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaseAr1Params {
    pub r: Array1<f64>,
    pub log_sigma: Array1<f64>,
}

impl BaseAr1Params {
    pub fn new(k: usize) -> Self {
        Self { r: Array1::zeros(k), log_sigma: Array1::zeros(k) }
    }

    pub fn rho(&self) -> Array1<f64> {
        self.r.mapv(f64::tanh)
    }

    pub fn sigma(&self) -> Array1<f64> {
        self.log_sigma.mapv(f64::exp)
    }
}

/// Post-hoc AR(1) fitted to latents recovered from the training data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatentAr1 {
    pub rho: Array1<f64>,
    pub sigma: Array1<f64>,
}

/// Per-epoch loss record kept with the trained model.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_nll: Vec<f64>,
    pub val_nll: Vec<f64>,
    pub best_epoch: usize,
}

/// A trained (or freshly initialized) conditional flow.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowModel {
    pub config: FlowConfig,
    pub couplings: Vec<Coupling>,
    pub tail: Option<TailParams>,
    pub base_ar1: Option<BaseAr1Params>,
    pub latent_ar1: Option<LatentAr1>,
    pub x_std: Standardizer,
    pub u_std: Standardizer,
    pub history: TrainHistory,
}

/// Gradients mirroring a [`FlowModel`]'s trainable parameters.
pub struct FlowGrads {
    pub couplings: Vec<CouplingGrads>,
    pub tail: Option<TailGrads>,
    pub base_r: Option<Array1<f64>>,
    pub base_log_sigma: Option<Array1<f64>>,
}

/// Intermediates of a cached data-to-base pass, consumed by the backward
/// sweep during training.
pub struct InversePass {
    pub z: Array2<f64>,
    coupling_caches: Vec<CouplingCache>,
    tail_cache: Option<TailCache>,
}

impl FlowModel {
    /// Fresh model with zero-initialized final layers, so the coupling
    /// stack starts as the identity map.
    pub fn new(config: &FlowConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut noise = NoiseStream::from_seed(seed);
        let cond_dim = config.cond_dim();
        let couplings = (0..config.n_coupling)
            .map(|l| {
                Coupling::new(
                    config.k,
                    cond_dim,
                    config.hidden,
                    config.depth,
                    config.s_cap,
                    l % 2,
                    true,
                    &mut noise,
                )
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            couplings,
            tail: match config.variant {
                FlowVariant::Tail => Some(TailParams::new(config.k)),
                _ => None,
            },
            base_ar1: match config.variant {
                FlowVariant::BaseAr1 => Some(BaseAr1Params::new(config.k)),
                _ => None,
            },
            latent_ar1: None,
            x_std: Standardizer::identity(config.k),
            u_std: Standardizer::identity(config.k),
            history: TrainHistory::default(),
        })
    }

    pub fn grads_like(&self) -> FlowGrads {
        FlowGrads {
            couplings: self.couplings.iter().map(|c| c.grads_like()).collect(),
            tail: self.tail.as_ref().map(|t| t.grads_like()),
            base_r: self.base_ar1.as_ref().map(|b| Array1::zeros(b.r.len())),
            base_log_sigma: self.base_ar1.as_ref().map(|b| Array1::zeros(b.r.len())),
        }
    }

    /// Flat views of all trainable parameters in a fixed order.
    pub fn param_slices(&mut self) -> Vec<&mut [f64]> {
        let mut v = Vec::new();
        for c in &mut self.couplings {
            v.extend(c.param_slices());
        }
        if let Some(t) = &mut self.tail {
            v.extend(t.param_slices());
        }
        if let Some(b) = &mut self.base_ar1 {
            v.push(b.r.as_slice_mut().expect("standard layout"));
            v.push(b.log_sigma.as_slice_mut().expect("standard layout"));
        }
        v
    }

    /// Base-to-data direction over standardized variables.
    pub fn forward_from_z(&self, z: &Array2<f64>, cond: &Array2<f64>) -> Array2<f64> {
        let mut a = z.clone();
        for c in &self.couplings {
            let (next, _) = c.forward_batch(&a, cond);
            a = next;
        }
        if let Some(t) = &self.tail {
            a = t.forward_batch(&a);
        }
        a
    }

    /// Data-to-base direction over standardized variables. Returns the base
    /// points and per-row log|det| of the inverse map, so that
    /// `log p(u_std) = log p_base(z) + logdet`.
    pub fn inverse_std(&self, u_std: &Array2<f64>, cond: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
        let mut logdet = Array1::zeros(u_std.nrows());
        let mut a = if let Some(t) = &self.tail {
            let cache = t.inverse_batch(u_std);
            logdet -= &t.log_deriv_rows(&cache);
            cache.y
        } else {
            u_std.clone()
        };
        for c in self.couplings.iter().rev() {
            let (next, ld) = c.inverse_batch(&a, cond);
            logdet += &ld;
            a = next;
        }
        (a, logdet)
    }

    /// Data-to-base pass retaining every cache needed for training.
    pub fn inverse_training(&self, u_std: &Array2<f64>, cond: &Array2<f64>) -> InversePass {
        let (mut a, tail_cache) = if let Some(t) = &self.tail {
            let cache = t.inverse_batch(u_std);
            (cache.y.clone(), Some(cache))
        } else {
            (u_std.clone(), None)
        };
        let mut caches = Vec::with_capacity(self.couplings.len());
        for c in self.couplings.iter().rev() {
            let (next, cache) = c.inverse_cached(&a, cond);
            caches.push(cache);
            a = next;
        }
        caches.reverse();
        InversePass { z: a, coupling_caches: caches, tail_cache }
    }

    /// Sum over rows and layers of the transformed log-scales plus tail
    /// log-derivatives: the total `−log|det|` of the cached inverse pass.
    pub fn pass_det_nll(&self, pass: &InversePass) -> f64 {
        let mut total = 0.0;
        for (c, cache) in self.couplings.iter().zip(&pass.coupling_caches) {
            total -= c.cache_logdet_rows(cache).sum();
        }
        if let (Some(t), Some(cache)) = (&self.tail, &pass.tail_cache) {
            total += t.log_deriv_rows(cache).sum();
        }
        total
    }

    /// Backward sweep matching [`FlowModel::inverse_training`]: `grad_z` is
    /// the loss gradient at the base points, `det_w` the weight of each
    /// log-determinant term (1/batch for a mean NLL). Parameter gradients
    /// accumulate into `grads`.
    pub fn backward(
        &self,
        pass: &InversePass,
        grad_z: &Array2<f64>,
        det_w: f64,
        grads: &mut FlowGrads,
    ) {
        let mut g = grad_z.clone();
        for (l, c) in self.couplings.iter().enumerate() {
            g = c.backward_inverse(&pass.coupling_caches[l], &g, det_w, &mut grads.couplings[l]);
        }
        if let (Some(t), Some(cache)) = (&self.tail, &pass.tail_cache) {
            t.backward(cache, &g, det_w, grads.tail.as_mut().expect("tail grads"));
        }
    }

    /// Row-wise log density of standardized targets under the iid
    /// standard-normal base.
    pub fn log_prob_std_rows(&self, u_std: &Array2<f64>, cond: &Array2<f64>) -> Array1<f64> {
        let (z, logdet) = self.inverse_std(u_std, cond);
        let k = self.config.k as f64;
        let mut out = logdet;
        for (o, zr) in out.iter_mut().zip(z.rows()) {
            let q: f64 = zr.iter().map(|v| v * v).sum();
            *o += -0.5 * q - 0.5 * k * LN_2PI;
        }
        out
    }

    /// Row-wise log density of raw tendencies conditioned on one raw state
    /// (lagged conditioning is padded with that state). Includes the
    /// standardization Jacobian, so this is a genuine density over U.
    pub fn log_prob_given_state(&self, u_raw: &Array2<f64>, x_state: &[f64]) -> Result<Array1<f64>> {
        if x_state.len() != self.config.k {
            return Err(Error::Misaligned(format!(
                "state length {} vs flow dimension {}",
                x_state.len(),
                self.config.k
            )));
        }
        let mut xs = vec![0.0; self.config.k];
        self.x_std.apply_into(x_state, &mut xs);
        let cond_dim = self.config.cond_dim();
        let mut cond = Array2::zeros((u_raw.nrows(), cond_dim));
        for mut row in cond.rows_mut() {
            for i in 0..cond_dim {
                row[i] = xs[i % self.config.k];
            }
        }
        let u_std = self.u_std.apply_rows(u_raw);
        let mut lp = self.log_prob_std_rows(&u_std, &cond);
        let jac: f64 = self.u_std.std.iter().map(|s| s.ln()).sum();
        lp -= jac;
        Ok(lp)
    }

    /// Joint log density of a standardized sequence under the AR(1) base
    /// (ρ = 0, σ = 1 unless the trained `base_ar1` parameters are present),
    /// with the first element treated as stationary.
    pub fn seq_log_prob_std(&self, u_std: &Array2<f64>, cond: &Array2<f64>) -> Result<f64> {
        if u_std.nrows() < 2 {
            return Err(Error::TooShort { needed: 2, got: u_std.nrows() });
        }
        let (z, logdet) = self.inverse_std(u_std, cond);
        let (rho, sigma) = match &self.base_ar1 {
            Some(b) => (b.rho(), b.sigma()),
            None => (Array1::zeros(self.config.k), Array1::ones(self.config.k)),
        };
        Ok(logdet.sum() - seq_base_nll(&z, &rho, &sigma))
    }

    /// Draw the next latent row given the previous one.
    fn advance_latent(&self, sampler: FlowSampler, started: bool, z_prev: &[f64], eps: &[f64], z: &mut [f64]) {
        match sampler {
            FlowSampler::Iid => z.copy_from_slice(eps),
            FlowSampler::LatentAr1 => {
                if !started {
                    z.copy_from_slice(eps);
                } else if let Some(b) = &self.base_ar1 {
                    // Trained base recursion: Z_t = ρ Z_{t−1} + σ ε_t.
                    let rho = b.rho();
                    let sigma = b.sigma();
                    for d in 0..z.len() {
                        z[d] = rho[d] * z_prev[d] + sigma[d] * eps[d];
                    }
                } else if let Some(l) = &self.latent_ar1 {
                    // Stationary recursion around the fitted marginal scale.
                    for d in 0..z.len() {
                        let r = l.rho[d];
                        z[d] = r * z_prev[d] + l.sigma[d] * (1.0 - r * r).sqrt() * eps[d];
                    }
                } else {
                    z.copy_from_slice(eps);
                }
            }
        }
    }

    /// Whether [`FlowSampler::LatentAr1`] sampling is available.
    pub fn supports_latent_ar1(&self) -> bool {
        self.base_ar1.is_some() || self.latent_ar1.is_some()
    }
}

/// Negative log density of a latent sequence under a per-dimension AR(1)
/// base with stationary start.
pub fn seq_base_nll(z: &Array2<f64>, rho: &Array1<f64>, sigma: &Array1<f64>) -> f64 {
    let (t_len, k) = z.dim();
    let mut nll = 0.0;
    for d in 0..k {
        let r = rho[d];
        let s2 = sigma[d] * sigma[d];
        let s2_st = s2 / (1.0 - r * r);
        nll += 0.5 * (LN_2PI + s2_st.ln()) + z[[0, d]] * z[[0, d]] / (2.0 * s2_st);
        for t in 1..t_len {
            let e = z[[t, d]] - r * z[[t - 1, d]];
            nll += 0.5 * (LN_2PI + s2.ln()) + e * e / (2.0 * s2);
        }
    }
    nll
}

/// Conditioning rows for a standardized state sequence: row `t` holds the
/// current state followed by `tau` lagged states, with lags before the
/// sequence start padded by the first state.
pub fn build_cond_rows(x_std: &Array2<f64>, variant: FlowVariant) -> Array2<f64> {
    let (t_len, k) = x_std.dim();
    let tau = match variant {
        FlowVariant::History { tau } => tau,
        _ => return x_std.clone(),
    };
    let mut cond = Array2::zeros((t_len, k * (tau + 1)));
    for t in 0..t_len {
        for lag in 0..=tau {
            let src = t.saturating_sub(lag);
            for d in 0..k {
                cond[[t, lag * k + d]] = x_std[[src, d]];
            }
        }
    }
    cond
}

impl FlowGrads {
    pub fn zero(&mut self) {
        for c in &mut self.couplings {
            c.zero();
        }
        if let Some(t) = &mut self.tail {
            t.zero();
        }
        if let Some(r) = &mut self.base_r {
            r.fill(0.0);
        }
        if let Some(s) = &mut self.base_log_sigma {
            s.fill(0.0);
        }
    }

    pub fn grad_slices(&self) -> Vec<&[f64]> {
        let mut v = Vec::new();
        for c in &self.couplings {
            v.extend(c.grad_slices());
        }
        if let Some(t) = &self.tail {
            v.extend(t.grad_slices());
        }
        if let Some(r) = &self.base_r {
            v.push(r.as_slice().expect("standard layout"));
        }
        if let Some(s) = &self.base_log_sigma {
            v.push(s.as_slice().expect("standard layout"));
        }
        v
    }
}

/// Serialized flow closure: the trained model plus fit provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowCheckpoint {
    pub model: FlowModel,
    pub dataset_sha256: String,
    pub train_seed: u64,
}

impl FlowCheckpoint {
    pub fn closure(&self, sampler: FlowSampler) -> Result<FlowClosure> {
        FlowClosure::new(Arc::new(self.model.clone()), sampler)
    }

    pub fn bank(&self, sampler: FlowSampler, members: usize) -> Result<FlowBank> {
        FlowBank::new(Arc::new(self.model.clone()), sampler, members)
    }
}

fn check_sampler(model: &FlowModel, sampler: FlowSampler) -> Result<()> {
    if sampler == FlowSampler::LatentAr1 && !model.supports_latent_ar1() {
        return Err(Error::InvalidConfig(
            "latent AR(1) sampling requires a trained base or fitted latent parameters".into(),
        ));
    }
    Ok(())
}

/// Per-member temporal state shared by [`FlowClosure`] and [`FlowBank`].
#[derive(Clone)]
struct MemberState {
    noise: NoiseStream,
    z_prev: Vec<f64>,
    started: bool,
    /// Standardized states, most recent first, at most τ+1 entries.
    hist: VecDeque<Vec<f64>>,
}

impl MemberState {
    fn new(k: usize, seed: u64) -> Self {
        Self {
            noise: NoiseStream::from_seed(seed),
            z_prev: vec![0.0; k],
            started: false,
            hist: VecDeque::new(),
        }
    }

    fn reset(&mut self, seed: u64) {
        self.noise = NoiseStream::from_seed(seed);
        self.started = false;
        self.hist.clear();
    }

    /// Push the standardized current state and write the conditioning row.
    fn push_and_fill_cond(&mut self, xs: Vec<f64>, tau: usize, cond_row: &mut [f64]) {
        let k = xs.len();
        self.hist.push_front(xs);
        self.hist.truncate(tau + 1);
        for lag in 0..=tau {
            let idx = lag.min(self.hist.len() - 1);
            let src = &self.hist[idx];
            cond_row[lag * k..(lag + 1) * k].copy_from_slice(src);
        }
    }
}

/// Single-trajectory flow closure implementing [`Closure`].
pub struct FlowClosure {
    model: Arc<FlowModel>,
    sampler: FlowSampler,
    state: MemberState,
}

impl FlowClosure {
    pub fn new(model: Arc<FlowModel>, sampler: FlowSampler) -> Result<Self> {
        check_sampler(&model, sampler)?;
        let k = model.config.k;
        Ok(Self { model, sampler, state: MemberState::new(k, 0) })
    }
}

impl Closure for FlowClosure {
    fn subgrid_into(&mut self, x: &[f64], _step: usize, out: &mut [f64]) {
        let k = self.model.config.k;
        let tau = self.model.config.tau();
        let mut xs = vec![0.0; k];
        self.model.x_std.apply_into(x, &mut xs);
        let mut cond = Array2::zeros((1, self.model.config.cond_dim()));
        self.state
            .push_and_fill_cond(xs, tau, cond.row_mut(0).as_slice_mut().expect("contiguous"));

        let mut eps = vec![0.0; k];
        self.state.noise.fill_standard_normal(&mut eps);
        let mut z = vec![0.0; k];
        self.model
            .advance_latent(self.sampler, self.state.started, &self.state.z_prev, &eps, &mut z);
        self.state.z_prev.copy_from_slice(&z);
        self.state.started = true;

        let z_arr = Array2::from_shape_vec((1, k), z).expect("shape");
        let u_std = self.model.forward_from_z(&z_arr, &cond);
        for d in 0..k {
            out[d] = u_std[[0, d]] * self.model.u_std.std[d] + self.model.u_std.mean[d];
        }
    }

    fn reset(&mut self, seed: u64) {
        self.state.reset(seed);
    }

    fn is_stochastic(&self) -> bool {
        true
    }

    fn clone_box(&self) -> Box<dyn Closure> {
        Box::new(FlowClosure {
            model: Arc::clone(&self.model),
            sampler: self.sampler,
            state: self.state.clone(),
        })
    }
}

/// Batched closure bank: all members' conditioning rows are assembled into
/// one matrix so each step costs one set of network evaluations.
pub struct FlowBank {
    model: Arc<FlowModel>,
    sampler: FlowSampler,
    states: Vec<MemberState>,
}

impl FlowBank {
    pub fn new(model: Arc<FlowModel>, sampler: FlowSampler, members: usize) -> Result<Self> {
        check_sampler(&model, sampler)?;
        let k = model.config.k;
        Ok(Self {
            model,
            sampler,
            states: (0..members).map(|_| MemberState::new(k, 0)).collect(),
        })
    }
}

impl ClosureBank for FlowBank {
    fn members(&self) -> usize {
        self.states.len()
    }

    fn subgrid_batch(&mut self, states: &Array2<f64>, _step: usize, out: &mut Array2<f64>) {
        let b = self.states.len();
        let k = self.model.config.k;
        let tau = self.model.config.tau();
        let mut cond = Array2::zeros((b, self.model.config.cond_dim()));
        let mut z = Array2::zeros((b, k));
        let mut eps = vec![0.0; k];
        let mut zrow = vec![0.0; k];
        for m in 0..b {
            let mut xs = vec![0.0; k];
            self.model
                .x_std
                .apply_into(states.row(m).as_slice().expect("contiguous"), &mut xs);
            let st = &mut self.states[m];
            st.push_and_fill_cond(xs, tau, cond.row_mut(m).as_slice_mut().expect("contiguous"));
            st.noise.fill_standard_normal(&mut eps);
            self.model
                .advance_latent(self.sampler, st.started, &st.z_prev, &eps, &mut zrow);
            st.z_prev.copy_from_slice(&zrow);
            st.started = true;
            z.row_mut(m)
                .as_slice_mut()
                .expect("contiguous")
                .copy_from_slice(&zrow);
        }
        let u_std = self.model.forward_from_z(&z, &cond);
        for m in 0..b {
            for d in 0..k {
                out[[m, d]] = u_std[[m, d]] * self.model.u_std.std[d] + self.model.u_std.mean[d];
            }
        }
    }

    fn reset_member(&mut self, m: usize, seed: u64) {
        self.states[m].reset(seed);
    }

    fn draw_model_member(&mut self, _m: usize, _seed: u64) {}
}
