//! Named random streams derived from one master seed.
//!
//! Every consumer of randomness in a run (network init, exploration noise,
//! environment resets, perception noise, evaluation, replay sampling) gets its
//! own ChaCha stream keyed by the master seed. Streams never share state, so
//! drawing more numbers from one of them leaves the others untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random generator used everywhere in the crate.
pub type Rng = ChaCha8Rng;

/// Consumers of randomness within a training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Init,
    Exploration,
    Environment,
    Perception,
    Evaluation,
    /// Replay sampling and target-policy smoothing noise.
    Training,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Init => 1,
            Stream::Exploration => 2,
            Stream::Environment => 3,
            Stream::Perception => 4,
            Stream::Evaluation => 5,
            Stream::Training => 6,
        }
    }
}

/// Factory for the named streams of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStreams {
    seed: u64,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A fresh generator positioned at the start of `stream`.
    pub fn stream(&self, stream: Stream) -> Rng {
        self.substream(stream, 0)
    }

    /// A fresh generator for the `index`-th independent sub-sequence of `stream`.
    pub fn substream(&self, stream: Stream, index: u32) -> Rng {
        let mut rng = Rng::seed_from_u64(self.seed);
        rng.set_stream((stream.id() << 32) | u64::from(index));
        rng
    }
}

/// Generator seeded directly, for tests and one-off utilities.
pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
