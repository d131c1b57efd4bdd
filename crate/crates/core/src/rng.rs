//! Named random streams derived from one root seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent consumers of randomness. Each gets its own ChaCha stream
/// under the same root seed, so changing how many numbers one component
/// draws never shifts another component's sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Split,
    Atlas,
    Init,
    Dropout,
    Negatives,
    TrainNegatives,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Split => 1,
            Stream::Atlas => 2,
            Stream::Init => 3,
            Stream::Dropout => 4,
            Stream::Negatives => 5,
            Stream::TrainNegatives => 6,
        }
    }
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}
