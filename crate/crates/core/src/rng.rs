//! The pseudorandom source shared by every sampler in the crate.
//!
//! All chains draw from ChaCha8 as implemented by `rand_chacha` 0.3, seeded
//! through `SeedableRng::seed_from_u64` and split into independent streams
//! with `set_stream`. The identifier below is written into every persisted
//! sample file so a reader can tell which generator produced it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ChainRng = ChaCha8Rng;

pub const RNG_ALGORITHM: &str = "chacha8/rand_chacha-0.3/seed_from_u64";

/// Generator for `seed`, positioned on the given stream.
pub fn seeded(seed: u64, stream: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
