//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator keyed by the 64-bit run seed and
//! selected by a 64-bit stream id, so subsystems draw from independent,
//! bit-reproducible sequences. Sub-streams (one per forecast trajectory,
//! for example) are derived by offsetting the stream id.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type NoiseStream = ChaCha8Rng;

/// Named stream identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    /// Synthetic training/test data.
    Data,
    /// Parameter initialization.
    Init,
    /// Latent noise fed to the generator during training.
    ModelNoise,
    /// Mini-batch selection and window offsets.
    Batching,
    /// Fresh draws for the uniformity gate and diagnostics.
    Gate,
    /// Monte Carlo used by the metrics.
    Metric,
    /// Forecast trajectories.
    Forecast,
    /// Dropout masks.
    Dropout,
    /// Generator draws for evaluation and plotting.
    Evaluation,
    /// Free-form stream id.
    Custom(u32),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Data => 1,
            Stream::Init => 2,
            Stream::ModelNoise => 3,
            Stream::Batching => 4,
            Stream::Gate => 5,
            Stream::Metric => 6,
            Stream::Forecast => 7,
            Stream::Dropout => 8,
            Stream::Evaluation => 9,
            Stream::Custom(c) => 1_000 + c as u64,
        }
    }
}

/// Opens `stream` under `seed`.
pub fn stream(seed: u64, stream: Stream) -> NoiseStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id() << 32);
    rng
}

/// Opens sub-stream `index` of `stream` under `seed`.
pub fn substream(seed: u64, stream: Stream, index: u64) -> NoiseStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stream.id() << 32) + 1 + index);
    rng
}

/// A child seed drawn from sub-stream `index` of `stream` under `seed`.
pub fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    substream(seed, stream, index).next_u64()
}
