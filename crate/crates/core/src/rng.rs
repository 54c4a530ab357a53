//! Seeded random streams.
//!
//! Every stochastic operation draws from a ChaCha stream keyed by
//! `(seed, domain)` and positioned by an item index, so results do not
//! depend on iteration order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Separates the random streams of independent pipeline stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    GroundTruth = 1,
    Contamination = 2,
    Shuffle = 3,
    TrainNoise = 4,
    Sampling = 5,
    Denoise = 6,
    Init = 7,
}

/// Stream for item `index` of `domain` under `seed`.
pub fn stream(seed: u64, domain: Domain, index: u64) -> Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
