//! Seed derivation for independent random streams.
//!
//! Every stochastic component draws from its own ChaCha stream keyed by
//! `(master seed, purpose, index)`, so adding a consumer or reordering
//! work across threads never shifts another component's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream purposes. The numeric tags are part of the reproducibility
/// contract; do not renumber.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Shadow = 1,
    Mobility = 2,
    Population = 3,
    Handover = 4,
    Disturbance = 5,
    Policy = 6,
    Init = 7,
    Minibatch = 8,
    Environment = 9,
    Map = 10,
    Projection = 11,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a seed with a purpose tag and an index into a new 64-bit seed.
pub fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    let a = splitmix64(seed ^ splitmix64(stream as u64));
    splitmix64(a ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, stream, index))
}
