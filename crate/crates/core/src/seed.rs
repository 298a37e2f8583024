//! Seed fan-out. A single user seed is expanded into independent per-purpose
//! streams with a counter-based mixer, so each module's randomness can be
//! reproduced without replaying the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purposes that draw randomness during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Split = 1,
    Anchors = 2,
    Init = 3,
    Itq = 4,
    LabelSubsample = 6,
    PairSubsample = 7,
    Baseline = 8,
    Synthetic = 9,
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedFan {
    base: u64,
}

impl SeedFan {
    pub fn new(base: u64) -> Self {
        Self { base }
    }

    pub fn base(&self) -> u64 {
        self.base
    }

    /// Seed for `stream`, optionally sub-indexed (e.g. a sweep cell or repeat).
    pub fn seed(&self, stream: Stream, index: u64) -> u64 {
        let s = mix64(self.base ^ mix64(stream as u64));
        mix64(s ^ mix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
    }

    pub fn rng(&self, stream: Stream, index: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed(stream, index))
    }
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
