//! Counter-based keyed randomness.
//!
//! A [`StreamKey`] is a 64-bit digest of a path of words (seed, purpose tag,
//! run, level, cell index, vertex, ...). Every random draw in the crate comes
//! from a ChaCha8 generator seeded by such a key, never from shared mutable
//! state, so samples depend only on *what* is drawn and not on the order or
//! thread in which it happens.
//!
//! The derivation (SplitMix64 finalizer chained over the words, then
//! `ChaCha8Rng::seed_from_u64`) is part of the reproducibility contract and
//! must not change within a release.

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

/// Purpose tags, mixed in first so streams for different uses never collide.
pub mod tag {
    pub const ORACLE: u64 = 0x6f72_6163_6c65;
    pub const RUN: u64 = 0x0072_756e;
    pub const ERROR_POINTS: u64 = 0x6572_7270_7473;
    pub const MONTE_CARLO: u64 = 0x6d63;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn root(seed: u64) -> Self {
        Self(splitmix64(seed))
    }

    #[must_use]
    pub fn derive(self, word: u64) -> Self {
        Self(splitmix64(self.0 ^ splitmix64(word)))
    }

    #[must_use]
    pub fn derive_all(self, words: impl IntoIterator<Item = u64>) -> Self {
        words.into_iter().fold(self, Self::derive)
    }

    pub fn value(self) -> u64 {
        self.0
    }

    /// 32-bit seed for generators that take one (the Sobol scrambler).
    pub fn seed_u32(self) -> u32 {
        (self.0 ^ (self.0 >> 32)) as u32
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

/// Seed of independent run `run` derived from a base seed.
pub fn run_seed(seed: u64, run: u64) -> u64 {
    StreamKey::root(seed).derive(tag::RUN).derive(run).value()
}
