//! Seeded random streams.
//!
//! Everything random in a run flows from ChaCha8 streams whose seeds are
//! derived with splitmix64, so results do not depend on the platform or on
//! the standard library's hasher.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// One round of splitmix64.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for an independent sub-stream: `seed ⊕ hash(stream)`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed ^ splitmix64(stream)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Named sub-streams used by the harness.
pub mod streams {
    pub const SPAWN: u64 = 0x5350_4157_4e00_0001;
    pub const POLICY_INIT: u64 = 0x504f_4c49_4359_0002;
    pub const INTRINSIC_INIT: u64 = 0x494e_5452_494e_0003;
    pub const ACTIONS: u64 = 0x4143_5449_4f4e_0004;
    pub const MINIBATCH: u64 = 0x4d49_4e49_4241_0005;
    pub const SCHEDULE: u64 = 0x5343_4845_4455_0006;
    pub const AUGMENT: u64 = 0x4155_474d_454e_0007;
    /// Test trials use `TRIAL_BASE + trial_id`.
    pub const TRIAL_BASE: u64 = 0x5452_4941_4c00_0000;
}
