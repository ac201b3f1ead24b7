//! Deterministic random streams.
//!
//! Every consumer of randomness draws from its own ChaCha8 stream keyed by
//! `(seed, stream, index)`, so adding draws in one subsystem never shifts
//! the sequence seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const WORLD: u64 = 1;
pub const CHANNEL: u64 = 2;
pub const PERCEPTION: u64 = 3;
pub const COMPRESSION: u64 = 4;
pub const CHAINS: u64 = 5;
pub const POLICY: u64 = 6;
pub const ENSEMBLE: u64 = 7;
pub const LAYOUT: u64 = 8;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let key = splitmix(splitmix(splitmix(seed) ^ stream) ^ index);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(stream);
    rng
}
