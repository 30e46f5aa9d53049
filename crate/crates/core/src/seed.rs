//! Counter-based seed derivation.
//!
//! Every random decision in an experiment draws from a stream whose seed is
//! a pure function of the experiment seed and a path of stream ids
//! (fold, round, purpose). Nothing stateful is carried between rounds, so a
//! run resumed from a state file replays exactly.
//!
//! The mixer is the SplitMix64 finalizer (increment `0x9E3779B97F4A7C15`,
//! multipliers `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB`).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of sub-stream `stream` of `seed`.
#[inline]
pub fn derive(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream.wrapping_mul(GOLDEN_GAMMA)))
}

/// Seed for one query round of one fold.
pub fn round_seed(seed: u64, fold: usize, round: usize) -> u64 {
    derive(derive(seed, fold as u64), round as u64)
}

/// 64-bit FNV-1a, used to fold string identifiers into seeds.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Maps a 64-bit hash to a uniform value in `[0, 1)`.
#[inline]
pub fn unit_interval(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
