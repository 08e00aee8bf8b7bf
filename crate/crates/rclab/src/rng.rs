//! Counter-based random streams.
//!
//! Every chain draws from a ChaCha8 stream selected by (master seed, stream
//! id), so results do not depend on which worker thread ran the chain.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream `stream` of the generator keyed by `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Stream id for chain `chain` of replica `replica`.
pub fn stream_id(replica: u64, chain: u64) -> u64 {
    (replica << 20) | (chain & 0xF_FFFF)
}

/// Stream for (replica, chain).
pub fn replica_stream(seed: u64, replica: u64, chain: u64) -> Rng {
    stream(seed, stream_id(replica, chain))
}

/// Stateless uniform in [0,1) keyed by (seed, key); used for bond fields that
/// are generated on demand.
pub fn hashed_uniform(seed: u64, key: u64) -> f64 {
    let mut z = seed ^ key.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    z = z.wrapping_add(key ^ 0x2545_F491_4F6C_DD1D);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
