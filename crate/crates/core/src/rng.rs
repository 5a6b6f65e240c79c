//! Deterministic random streams.
//!
//! Every stochastic component draws from a ChaCha8 generator keyed on a
//! `(seed, stream)` pair: the seed is expanded to a 256-bit key and the
//! stream id selects one of the 2^64 independent ChaCha streams. Tree `j`
//! of a forest uses `substream(seed, j)`, so a forest is the same no matter
//! how trees are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

pub fn substream(seed: u64, stream: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed from a parent seed and a label, for components that
/// need their own family of substreams (e.g. one per treatment arm).
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    // splitmix64 finalizer over the combined input
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
