//! Counter-style random streams.
//!
//! Every random quantity is drawn from a stream addressed by
//! `(master seed, domain, index)`, so results do not depend on how work is
//! split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Independent purposes that draw from the same master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Channel = 1,
    AlphaFzf = 2,
    AlphaPzf = 3,
    Geometry = 4,
    Shadowing = 5,
    Drop = 6,
    Nmse = 7,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream `index` of `domain` under `seed`.
pub fn stream(seed: u64, domain: Domain, index: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed ^ (domain as u64).wrapping_mul(GOLDEN));
    rng.set_stream(index);
    rng
}

/// Seed for a sub-experiment (for example one drop of a campaign).
pub fn child_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(GOLDEN);
    // splitmix64 finaliser
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
