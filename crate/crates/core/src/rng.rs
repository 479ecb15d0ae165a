//! Seed derivation and the counter-based generator used everywhere.
//!
//! Every random quantity is drawn from a ChaCha8 stream. Sub-seeds are
//! derived from a root seed by hashing a purpose string (FNV-1a folded
//! through SplitMix64), and parallel work is split across ChaCha stream ids
//! so results do not depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Name recorded in configuration files for the generator in use.
pub const GENERATOR_NAME: &str = "chacha8";

pub type Rng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive a sub-seed for `purpose` from `root`.
pub fn derive_seed(root: u64, purpose: &str) -> u64 {
    splitmix64(root ^ splitmix64(fnv1a(purpose.as_bytes())))
}

/// Derive the seed for item `index` (e.g. a test index) of a stream.
pub fn derive_indexed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Generator for `seed` positioned at the start of stream `stream`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(1, "network"), derive_seed(1, "network"));
        assert_ne!(derive_seed(1, "network"), derive_seed(1, "design"));
        assert_ne!(derive_seed(1, "network"), derive_seed(2, "network"));
        assert_ne!(derive_indexed(5, 0), derive_indexed(5, 1));
    }

    #[test]
    fn streams_are_independent_of_draw_order() {
        let mut a = stream(9, 3);
        let first: u64 = a.random();
        let mut other = stream(9, 2);
        let _: u64 = other.random();
        let mut b = stream(9, 3);
        assert_eq!(first, b.random::<u64>());
    }
}
