//! Seed derivation. Every random decision in a run flows from one user seed,
//! split into independent ChaCha streams per purpose.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams derived from a single run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Split = 1,
    Init = 2,
    Shuffle = 3,
    Negatives = 4,
    Objective = 5,
    Graph = 6,
    Walk = 7,
    Preference = 8,
}

pub fn derived_rng(seed: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}

/// Stream for purpose `purpose`, sub-indexed by `index` (e.g. one per object).
pub fn indexed_rng(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(purpose as u64);
    rng
}
