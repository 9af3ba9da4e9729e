//! Counter-based random streams keyed by `(master seed, purpose, replicate)`.
//!
//! Every replicate of an experiment owns its own ChaCha stream, so results
//! do not depend on how replicates are scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Distinguishes independent uses of the same master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Tree = 1,
    Jitter = 2,
    Kesten = 3,
    Unconditioned = 4,
    Misc = 5,
}

pub fn stream(master_seed: u64, purpose: Purpose, replicate: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&(purpose as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(replicate);
    rng
}
