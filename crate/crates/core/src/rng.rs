//! Seeded random streams.
//!
//! Every stochastic component draws from its own ChaCha stream derived from
//! the run seed and a fixed tag, so adding draws in one component never shifts
//! the numbers seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub mod tag {
    pub const GCN_INIT: u64 = 1;
    pub const PREDICTOR_INIT: u64 = 2;
    pub const REDUCER: u64 = 3;
    pub const PERTURBATION: u64 = 4;
    pub const RANDOM_DROP: u64 = 5;
    pub const SBM_EDGES: u64 = 11;
    pub const SBM_NOISE: u64 = 12;
    pub const SBM_FEATURES: u64 = 13;
    pub const SBM_SPLITS: u64 = 14;
    pub const ATTACK: u64 = 21;
    pub const MATCHED_RANDOM: u64 = 22;
}

pub fn stream(seed: u64, tag: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng
}
