//! Seeded random streams.
//!
//! Every simulation run owns one ChaCha stream. Streams are addressed by a
//! master seed plus a 64-bit stream id, so replications can run in any order
//! (or in parallel) and still reproduce bit-identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RNG type used throughout the crate.
pub type StreamRng = ChaCha8Rng;

/// Independent stream `stream` of the generator seeded with `master`.
pub fn stream_rng(master: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

/// Packs a two-level index (e.g. epsilon index, replication) into a stream id.
pub fn stream_id(outer: u32, inner: u32) -> u64 {
    (u64::from(outer) << 32) | u64::from(inner)
}
