//! Seeded, counter-based RNG substreams.
//!
//! Bootstrap draws and simulation runs each get their own ChaCha stream keyed
//! by `(seed, index)`, so parallel and serial execution produce identical
//! random sequences.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// RNG for substream `stream` of the generator keyed by `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derive an independent 64-bit seed from `(seed, index)`.
///
/// SplitMix64 finalizer; used to key nested generators (e.g. the bootstrap
/// inside one simulation run) so their streams never collide with the outer
/// ones.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
