//! Seed derivation.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] seeded with a
//! 64-bit value. Child seeds are derived from a parent seed and a path of
//! integer labels by folding each label through the SplitMix64 finalizer:
//!
//! ```text
//! s = parent
//! for label in path:
//!     s = splitmix64(s ^ splitmix64(label + 0x9E3779B97F4A7C15))
//! ```
//!
//! The scheme is simple enough to port to other languages bit-exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// The SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `parent` and a label path.
pub fn derive(parent: u64, path: &[u64]) -> u64 {
    path.iter().fold(parent, |s, &label| {
        splitmix64(s ^ splitmix64(label.wrapping_add(GOLDEN)))
    })
}

/// FNV-1a hash of a string, for turning ids into seed labels.
pub fn label(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Generator used for every seeded draw.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Labels for the sub-streams of a single operation, so that e.g. the
/// reverb impulse response and the noise draw of the same view never share
/// a stream.
pub mod stream {
    pub const NOISE: u64 = 1;
    pub const REVERB: u64 = 2;
    pub const SPEC_AUGMENT: u64 = 3;
    pub const EDA: u64 = 4;
    pub const LAMBDA: u64 = 5;
    pub const GAMMA: u64 = 6;
    pub const SELECT: u64 = 7;
    pub const PAIR: u64 = 8;
    pub const VIEW: u64 = 9;
    pub const SHUFFLE: u64 = 10;
    pub const CAPTION: u64 = 11;
    pub const BATCH: u64 = 12;
}
