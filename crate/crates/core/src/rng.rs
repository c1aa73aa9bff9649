//! Explicitly seeded, splittable random streams.
//!
//! Every random consumer derives its own ChaCha stream from `(seed, stream)`,
//! so no operation shares generator state with another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream identifiers, one per consumer.
pub mod stream {
    pub const FPS_START: u64 = 1;
    pub const SUBSAMPLE: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const BBOX_SAMPLES: u64 = 4;
    pub const SYNTHETIC: u64 = 5;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
