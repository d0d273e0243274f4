//! Reproducible random-number streams.
//!
//! A stream is identified by `(seed, stream_id)`. The generator behind it is
//! ChaCha8 keyed by the seed with the ChaCha stream counter set to
//! `stream_id`, so replication `r` of a study simply uses `stream_id = r`.
//! Nested work (an estimator inside a replication, a draw inside an
//! estimator) derives child streams with [`RngStream::split`], which keeps
//! every draw a pure function of its path and never of the thread that ran it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// The concrete generator handed out by [`RngStream::generator`].
pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn generator(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Child stream keyed by `tag`. Distinct tags give distinct streams, and
    /// children of distinct parents get distinct keys.
    pub fn split(&self, tag: u64) -> RngStream {
        let key = splitmix64(splitmix64(self.seed) ^ splitmix64(self.stream_id.wrapping_add(0x632B_E59B_D9B4_E019)));
        RngStream {
            seed: key,
            stream_id: tag,
        }
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
