//! Hierarchical, counter-based seed derivation.
//!
//! Every random draw in an experiment is tied to the master seed through a
//! (role, index...) path, so reruns with the same master seed reproduce every
//! stream bit-for-bit, and enlarging one axis of an experiment (say, more
//! model draws) leaves the streams of the other axes untouched.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

/// Distinct stream roles. The numeric discriminants are part of the on-disk
/// reproducibility contract: changing them changes every derived stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u64)]
pub enum Role {
    /// Spin-up initial condition for a truth run.
    SpinUp = 1,
    /// Long attractor run used to harvest initial states.
    PerfectStates = 2,
    /// Climatology run (indexed by run id).
    Climatology = 3,
    /// Initial-condition perturbation, indexed by (init, member).
    Perturbation = 4,
    /// Stochastic path noise of a reduced-model member, indexed by
    /// (init, member, model draw).
    PathNoise = 5,
    /// Posterior coefficient draw of a Bayesian closure, indexed by
    /// (init, model draw): shared by all members of one model instance.
    CoefficientDraw = 6,
    /// Weight initialization when fitting a closure.
    FitInit = 7,
    /// Minibatch shuffling during training.
    DataShuffle = 8,
    /// Truth runs for sensitivity/internal-variability scans, indexed by init.
    TruthEnsemble = 9,
    /// Anything that needs randomness outside the roles above.
    Generic = 10,
}

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer: a well-mixed 64-bit bijection.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `master` along a `(role, index...)` path.
///
/// The chain absorbs one tag at a time through the SplitMix64 finalizer, so
/// child seeds for different paths are statistically independent.
pub fn derive(master: u64, role: Role, index: &[u64]) -> u64 {
    let mut s = mix(master ^ GAMMA);
    s = mix(s ^ mix((role as u64).wrapping_add(GAMMA)));
    for &t in index {
        s = mix(s ^ mix(t.wrapping_add(GAMMA)));
    }
    s
}

/// A seeded stream of random variates backed by ChaCha12.
///
/// ChaCha is platform-independent and insensitive to call-site reordering
/// (unlike shared global RNGs), which is what makes per-(role, index)
/// streams reproducible.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha12Rng,
}

impl NoiseStream {
    /// Stream from an explicit 64-bit seed.
    pub fn from_seed(seed: u64) -> Self {
        Self {
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    /// Stream for a `(role, index...)` path under `master`.
    pub fn derived(master: u64, role: Role, index: &[u64]) -> Self {
        Self::from_seed(derive(master, role, index))
    }

    /// One standard-normal draw.
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Fill a slice with standard-normal draws.
    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = StandardNormal.sample(&mut self.rng);
        }
    }

    /// One normal draw with the given mean and standard deviation.
    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        debug_assert!(std >= 0.0);
        Normal::new(mean, std).expect("finite normal parameters").sample(&mut self.rng)
    }

    /// One uniform draw on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Access the underlying RNG (shuffles, integer draws).
    pub fn rng(&mut self) -> &mut ChaCha12Rng {
        &mut self.rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_is_deterministic() {
        let a = derive(42, Role::PathNoise, &[3, 1, 4]);
        let b = derive(42, Role::PathNoise, &[3, 1, 4]);
        assert_eq!(a, b);
    }

    #[test]
    fn derive_separates_paths() {
        let base = derive(42, Role::PathNoise, &[3, 1, 4]);
        assert_ne!(base, derive(43, Role::PathNoise, &[3, 1, 4]));
        assert_ne!(base, derive(42, Role::Perturbation, &[3, 1, 4]));
        assert_ne!(base, derive(42, Role::PathNoise, &[3, 1, 5]));
        assert_ne!(base, derive(42, Role::PathNoise, &[3, 1]));
        // Order of the index tuple matters.
        assert_ne!(base, derive(42, Role::PathNoise, &[4, 1, 3]));
    }

    #[test]
    fn streams_reproduce() {
        let mut a = NoiseStream::derived(7, Role::Perturbation, &[0, 1]);
        let mut b = NoiseStream::derived(7, Role::Perturbation, &[0, 1]);
        for _ in 0..100 {
            assert_eq!(a.standard_normal(), b.standard_normal());
        }
    }

    #[test]
    fn streams_differ_across_members() {
        let mut a = NoiseStream::derived(7, Role::Perturbation, &[0, 1]);
        let mut b = NoiseStream::derived(7, Role::Perturbation, &[0, 2]);
        let xa: Vec<f64> = (0..8).map(|_| a.standard_normal()).collect();
        let xb: Vec<f64> = (0..8).map(|_| b.standard_normal()).collect();
        assert_ne!(xa, xb);
    }

    /// Frozen derivation values: the derivation chain is part of the
    /// reproducibility contract, so accidental changes must fail loudly.
    #[test]
    fn derive_frozen_values() {
        assert_eq!(derive(0, Role::SpinUp, &[]), 0x8e58_975f_6d0d_c556);
        assert_eq!(derive(1234, Role::PathNoise, &[5, 6, 7]), 0x4433_ee91_b9d9_b600);
    }
}
