//! Seeded, splittable randomness.
//!
//! A [`RngSeed`] is a pure key. Splitting it by label or by index yields
//! independent child keys, and the same key always produces the same draws,
//! independent of platform and of whatever other streams exist. Workers never
//! share a stream; each unit of work derives its own key.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LABEL_TAG: u64 = 0x9ae1_6a3b_2f90_404f;
const INDEX_TAG: u64 = 0xd1b5_4a32_d192_ed03;

/// SplitMix64 finalizer; good avalanche for key derivation.
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Key identifying a deterministic random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngSeed(u64);

impl RngSeed {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn value(self) -> u64 {
        self.0
    }

    /// Named substream, e.g. `"env"`, `"policy"`, `"tasks"`.
    pub fn substream(self, label: &str) -> Self {
        Self(mix(self.0 ^ fnv1a64(label.as_bytes()) ^ LABEL_TAG))
    }

    /// Indexed substream, e.g. one per rollout or per meta-iteration.
    pub fn child(self, index: u64) -> Self {
        Self(mix(self.0 ^ mix(index ^ INDEX_TAG)))
    }

    /// Concrete sampling stream for this key.
    pub fn rng(self) -> Rng {
        Rng(ChaCha8Rng::seed_from_u64(self.0))
    }
}

/// Sampling stream backed by ChaCha8; reproducible across platforms.
#[derive(Clone, Debug)]
pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Unbiased integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        let n64 = n as u64;
        // Rejection zone keeps the draw exactly uniform.
        let zone = u64::MAX - (u64::MAX % n64 + 1) % n64;
        loop {
            let x = self.next_u64();
            if x <= zone {
                return (x % n64) as usize;
            }
        }
    }

    /// Standard normal draw via Box-Muller; consumes exactly two uniforms.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform(); // (0, 1], keeps log finite
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
    }
}
