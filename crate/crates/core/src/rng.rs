//! Named random streams derived from a single seed. Each consumer draws from
//! its own ChaCha stream so that, for example, adding augmentation draws never
//! perturbs the shuffling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type DacRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data = 1,
    Init = 2,
    Shuffle = 3,
    Augment = 4,
    Analysis = 5,
}

pub fn stream(seed: u64, which: Stream) -> DacRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// A sub-stream keyed by an extra integer, e.g. a class index inside analysis.
pub fn substream(seed: u64, which: Stream, key: u64) -> DacRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ key.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(which as u64);
    rng
}
