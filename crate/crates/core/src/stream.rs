//! Deterministic random streams with named child derivation.
//!
//! Every source of randomness in the crate is a [`RandomStream`]. A stream is
//! identified by a 64-bit seed; independent sub-streams are derived by hashing
//! the parent seed together with a list of integer labels, so that e.g. trial
//! `t` of estimator `e` at checkpoint `c` always sees the same draws no matter
//! in which order trials execute.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Domain tag so that base seed 0 does not map to the mixer's fixed point.
const SEED_TAG: u64 = 0x5342_4e4c_4142_0001;

/// SplitMix64 finalizer; used both for seed derivation and cheap content hashes.
#[inline]
pub fn mix64(mut h: u64) -> u64 {
    h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Derive a child seed from a base seed and a label path.
pub fn derive_seed(base: u64, labels: &[u64]) -> u64 {
    let mut h = mix64(base ^ SEED_TAG);
    for &l in labels {
        h = mix64(h ^ l);
    }
    h
}

/// FNV-1a 64-bit hash of a byte slice.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seeded random stream. Cloning snapshots the generator state, so a forward
/// pass can be replayed bit-identically from a saved clone.
#[derive(Clone, Debug)]
pub struct RandomStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        RandomStream { seed, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// The seed this stream was created from (not the current state).
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derive an independent child stream from this stream's seed and labels.
    pub fn child(&self, labels: &[u64]) -> RandomStream {
        RandomStream::new(derive_seed(self.seed, labels))
    }

    /// Uniform draw in the open interval (0, 1).
    #[inline]
    pub fn open01(&mut self) -> f64 {
        // 53 random bits, offset by half an ulp so 0 and 1 are excluded.
        let bits = self.rng.gen::<u64>() >> 11;
        (bits as f64 + 0.5) * (1.0 / 9007199254740992.0)
    }

    /// Uniform draw in [lo, hi).
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.rng.gen::<f64>()
    }

    /// Uniform integer in [0, n).
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    /// Standard logistic draw via inverse cdf.
    #[inline]
    pub fn logistic(&mut self) -> f64 {
        let u = self.open01();
        (u / (1.0 - u)).ln()
    }
}
