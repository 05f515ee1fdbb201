//! Deterministic random streams.
//!
//! Every stream is a ChaCha generator keyed by a hash of `(seed, path...)`,
//! so a replicate or bootstrap draw sees the same numbers regardless of
//! scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type StreamRng = ChaCha12Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for the substream identified by `path` under `seed`.
pub fn substream(seed: u64, path: &[u64]) -> StreamRng {
    let mut key = [0u8; 32];
    let mut h = splitmix64(seed);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    for chunk in key.chunks_mut(8) {
        h = splitmix64(h);
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    StreamRng::from_seed(key)
}
