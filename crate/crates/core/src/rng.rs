use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Independent deterministic stream for `(seed, purpose)`.
pub fn stream(seed: u64, purpose: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng
}

/// Stream tags; every randomized routine draws from its own stream so that
/// changing one consumer never shifts another.
pub mod purpose {
    pub const SPLIT: u64 = 1;
    pub const NEGATIVES: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const PRETRAIN_INIT: u64 = 4;
    pub const PRETRAIN_SAMPLE: u64 = 5;
    pub const CORRUPT: u64 = 6;
    pub const LOCAL_TIEBREAK: u64 = 7;
    pub const MODEL_INIT: u64 = 8;
    pub const BATCH_ORDER: u64 = 9;
    pub const RELAX_NOISE: u64 = 10;
    pub const SYNTHETIC: u64 = 11;
}

/// Mix two words into a new seed (splitmix64 finalizer).
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
