//! Seed derivation.
//!
//! Every randomized step draws from a ChaCha stream keyed by the global seed
//! and a label path such as `["examples", "wiki", "pass", "2"]`. Streams
//! never depend on thread scheduling or on how many values a sibling stream
//! consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xxhash_rust::xxh3::xxh3_64_with_seed;

pub type StageRng = ChaCha8Rng;

pub fn substream(seed: u64, labels: &[&str]) -> StageRng {
    let mut key = Vec::with_capacity(64);
    for label in labels {
        key.extend_from_slice(&(label.len() as u64).to_le_bytes());
        key.extend_from_slice(label.as_bytes());
    }
    let derived = xxh3_64_with_seed(&key, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(derived);
    rng.set_stream(seed);
    rng
}
