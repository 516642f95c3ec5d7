//! Seeded randomness.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from a `u64`.
//! ChaCha output is value-stable across `rand_chacha` releases, so golden
//! files survive dependency upgrades. Uniform floats are built directly from
//! `next_u64` rather than through `rand` distributions for the same reason.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw from `[0, 1)` with 53 bits of precision.
pub fn uniform(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer in `0..n` (Lemire's multiply-shift with rejection).
pub fn below(rng: &mut impl RngCore, n: u64) -> u64 {
    assert!(n > 0);
    let threshold = n.wrapping_neg() % n;
    loop {
        let x = rng.next_u64();
        let m = (x as u128) * (n as u128);
        if (m as u64) >= threshold {
            return (m >> 64) as u64;
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a path of stream labels.
///
/// Stages use fixed label constants (see [`stage`]) followed by problem and
/// grid indices, so e.g. the forward stage of problem 3 always gets
/// `derive_seed(master, &[stage::FORWARD, 3])` regardless of which
/// experiment runs it.
pub fn derive_seed(parent: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(parent), |acc, &label| splitmix64(acc ^ splitmix64(label)))
}

pub mod stage {
    pub const INSTANCE: u64 = 1;
    pub const FORWARD: u64 = 2;
    pub const SELECT: u64 = 3;
    pub const REVERSE: u64 = 4;
    pub const RANDOM_INITIAL: u64 = 5;
    pub const SHOT: u64 = 6;
}
