//! Reproducible, splittable random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Identifies one independent random stream: a global seed plus a stream id.
///
/// Two streams with the same `(seed, stream_id)` produce identical draws;
/// different stream ids under one seed are independent. Replicas of an
/// experiment each get their own stream id, which makes the results
/// independent of how the work is scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// A stream derived from this one; used to give sub-tasks their own draws.
    pub fn child(&self, index: u64) -> Self {
        Self { seed: self.seed, stream_id: splitmix(self.stream_id ^ splitmix(index.wrapping_add(0x9e37))) }
    }

    /// The generator for this stream, positioned at its start.
    pub fn generator(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
