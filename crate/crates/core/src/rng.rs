//! Portable deterministic randomness.
//!
//! All seeded behaviour in the crate (synthetic corpora, multistart
//! perturbations) draws from SplitMix64: state advances by
//! `0x9E3779B97F4A7C15`, output is mixed with `0xBF58476D1CE4E5B9` and
//! `0x94D049BB133111EB` (shifts 30, 27, 31).  Uniforms take the top 53 bits,
//! normals use the cosine branch of Box–Muller.  The three rules together are
//! enough to reproduce a corpus bit for bit in another language.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Seeded generator used across the crate.
#[derive(Debug, Clone)]
pub struct Rng(SplitMix64);

impl Rng {
    /// Generator whose internal state is exactly `seed`.
    pub fn new(seed: u64) -> Self {
        Rng(SplitMix64::from_seed(seed.to_le_bytes()))
    }

    /// Generator for sub-stream `stream` of `seed`; streams are independent of
    /// the order in which they are created.
    pub fn stream(seed: u64, stream: u64) -> Self {
        Rng::new(derive_seed(seed, stream))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal deviate; consumes two uniforms.
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Mixes a stream index into a seed with one SplitMix64 finalization.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
