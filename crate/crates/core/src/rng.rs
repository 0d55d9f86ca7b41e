//! Counter-based seeding.
//!
//! Randomness is never threaded through a shared generator. Each consumer
//! derives its own ChaCha8 stream from `(seed, index)`, so trials and bins can
//! be processed in any order or on any thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Salt separating tie-break streams from corpus-sampling streams.
pub(crate) const TIE_SALT: u64 = 0x7469_6562_7265_616b;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent 64-bit seed for `index` under `seed`.
pub fn mix(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_mul(GOLDEN)))
}

/// A ChaCha8 generator keyed by `seed`, positioned on stream `stream`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
