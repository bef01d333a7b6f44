//! Seeded random streams. Every consumer draws from its own ChaCha stream
//! so that adding draws in one place never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const STREAM_PAIRED: u64 = 1;
pub(crate) const STREAM_UNPAIRED: u64 = 2;
pub(crate) const STREAM_EVAL: u64 = 3;
pub(crate) const STREAM_SPLIT: u64 = 4;
pub(crate) const STREAM_FRESH: u64 = 5;
pub(crate) const STREAM_POOL: u64 = 6;
pub(crate) const STREAM_BINS: u64 = 7;

pub fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
