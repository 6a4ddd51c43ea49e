//! Seeded, named random substreams.
//!
//! Every consumer of randomness asks for a stream by name (a column code, an
//! imputation index, a bootstrap replicate). ChaCha20 is counter based, so a
//! stream is fully determined by `(seed, name, index)` no matter which thread
//! draws from it or in what order streams are created.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type StreamRng = ChaCha20Rng;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

/// Stream `index` of the substream family `name` under the master `seed`.
pub fn substream(seed: u64, name: &str, index: u64) -> StreamRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let stream = fnv1a(name.as_bytes()) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed, for handing a whole sub-computation its own master seed.
pub fn child_seed(seed: u64, name: &str, index: u64) -> u64 {
    use rand::RngCore;
    substream(seed, name, index).next_u64()
}
