use rand::distr::{Distribution, Open01};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Identifies one reproducible random stream: a master seed plus a stream id.
///
/// Streams are backed by ChaCha8 with the stream id mapped onto the cipher's
/// stream counter, so distinct ids give non-overlapping sequences and a stream
/// is reproduced bit-for-bit regardless of which thread consumes it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// A derived stream, e.g. one per Monte Carlo batch or pipeline stage.
    pub fn child(&self, index: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id: splitmix64(splitmix64(self.stream_id) ^ index.wrapping_add(0x5851_f42d_4c95_7f2d)),
        }
    }

    pub fn generator(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// A uniform variate in the open interval (0, 1).
#[inline]
pub fn uniform01<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    Open01.sample(rng)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
