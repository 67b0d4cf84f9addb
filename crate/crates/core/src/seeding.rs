//! Seed derivation for reproducible parallel Monte Carlo.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded through
//! [`derive_seed`]. The mixing function is SplitMix64's finalizer:
//!
//! ```text
//! splitmix64(x) = let z = x + 0x9E3779B97F4A7C15;
//!                 z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
//!                 z = (z ^ (z >> 27)) * 0x94D049BB133111EB;
//!                 z ^ (z >> 31)                       (all wrapping)
//! mix(seed, i)  = splitmix64(seed ^ splitmix64(i))
//! derive_seed(base, [i1, i2, ...]) = mix(mix(base, i1), i2) ...
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn mix(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(base, |s, &i| mix(s, i))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream labels used when one seed feeds several independent draws.
pub mod stream {
    pub const INSTANCE: u64 = 0;
    pub const DATASET: u64 = 1;
    pub const EVAL_STATES: u64 = 2;
}
