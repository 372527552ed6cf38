//! Seeded random streams. All randomness in the crate flows from an explicit
//! `(seed, stream)` pair so reruns are bit-identical.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type UqRng = ChaCha8Rng;

/// Independent generator for sub-task `stream` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> UqRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
