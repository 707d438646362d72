//! Deterministic randomness.
//!
//! All Monte-Carlo loops draw from counter-based ChaCha streams keyed by
//! `(seed, shard)`, so a computation split over any number of workers
//! produces the same bits as a serial run.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Number of samples evaluated per shard of a Monte-Carlo loop.
pub const SHARD_SIZE: usize = 1 << 16;

/// Independent generator for shard `shard` of the computation keyed by `seed`.
pub fn stream_rng(seed: u64, shard: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shard);
    rng
}

/// Split `n` samples into `(shard index, shard length)` pieces of at most
/// [`SHARD_SIZE`] samples.
pub fn shards(n: usize) -> Vec<(u64, usize)> {
    let mut out = Vec::new();
    let mut remaining = n;
    let mut idx = 0u64;
    while remaining > 0 {
        let len = remaining.min(SHARD_SIZE);
        out.push((idx, len));
        remaining -= len;
        idx += 1;
    }
    out
}
