//! Seeded random streams.
//!
//! Every stochastic step draws from ChaCha8 (`rand_chacha::ChaCha8Rng`), a
//! counter-based generator: the 64-bit seed is expanded to a 256-bit key with
//! `SeedableRng::seed_from_u64`, and independent streams for the same seed are
//! selected with `set_stream`. The stream ids used by the library are below.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Weight initialization.
pub const STREAM_INIT: u64 = 0;
/// Training set.
pub const STREAM_TRAIN_DATA: u64 = 1;
/// Held-out test set.
pub const STREAM_TEST_DATA: u64 = 2;
/// Mini-batch shuffling.
pub const STREAM_SHUFFLE: u64 = 3;
/// Sampling for empirical Lipschitz estimates.
pub const STREAM_PROBE: u64 = 4;

pub fn stream(seed: u64, id: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
