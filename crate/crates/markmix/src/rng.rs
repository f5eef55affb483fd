//! Seed derivation for reproducible, independent RNG streams.
//!
//! Every randomized stage (restart, sweep entry, synthetic repetition,
//! permutation draw, ...) owns a stream derived from the base seed plus a
//! purpose tag and its coordinates, so parallel and serial execution, and
//! repeated entries with the same coordinates, produce identical results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags keeping independent streams from colliding.
pub mod tag {
    pub const RESTART: u64 = 0x01;
    pub const SWEEP: u64 = 0x02;
    pub const SYNTH_CORPUS: u64 = 0x10;
    pub const SYNTH_CELL: u64 = 0x11;
    pub const PERM_PRIORS: u64 = 0x20;
    pub const PERM_SHUFFLE: u64 = 0x21;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a list of coordinate words into a new seed.
pub fn derive_seed(base: u64, words: &[u64]) -> u64 {
    let mut acc = splitmix64(base);
    for &w in words {
        acc = splitmix64(acc ^ splitmix64(w));
    }
    acc
}

/// A ChaCha stream for the given (base, coordinates) cell.
pub fn stream(base: u64, words: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, words))
}
