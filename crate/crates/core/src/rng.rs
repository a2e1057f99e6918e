//! Counter-based seed derivation.
//!
//! Every random stream used by an operator is keyed by `(master seed, tag,
//! index)`, so any worker can regenerate exactly the part of an operator it
//! owns without receiving it from anyone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. The values are part of the reproducibility contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Sampling = 1,
    RightSigns = 2,
    LeftSigns = 3,
    Column = 4,
    Trial = 5,
    Data = 6,
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `seed ⊕ hash(tag, index)`.
pub fn child_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    seed ^ mix64(mix64(stream as u64) ^ index)
}

pub fn child_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(child_seed(seed, stream, index))
}
