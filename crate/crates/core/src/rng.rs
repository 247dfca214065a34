//! Random stream construction.
//!
//! Every stochastic routine takes its stream explicitly. Streams used by the
//! environment are keyed by position (step, pixel), so synthesis can be split
//! across threads without changing a single bit of output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a seed together with a list of counters into a new 64-bit key.
pub fn derive_key(seed: u64, counters: &[u64]) -> u64 {
    counters
        .iter()
        .fold(splitmix(seed), |acc, &c| splitmix(acc ^ splitmix(c)))
}

/// A stream keyed by `(seed, counters...)`.
pub fn keyed_stream(seed: u64, counters: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_key(seed, counters))
}

/// Stream tags, so that agent and environment draws never overlap.
pub mod tag {
    pub const AGENT: u64 = 1;
    pub const ENVIRONMENT: u64 = 2;
    pub const ORACLE: u64 = 3;
}
