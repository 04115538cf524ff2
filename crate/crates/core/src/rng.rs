//! Seeded random number generation.
//!
//! Every stochastic routine in the crate takes an explicit `u64` seed. Experiment
//! drivers derive per-module seeds from one master seed with [`derive_seed`], so
//! results do not depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used throughout the crate.
pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive a sub-seed from a master seed and a module tag.
///
/// FNV-1a over the tag bytes, mixed with the master seed through a splitmix64
/// finalizer. The mapping is fixed, so archived configs reproduce across builds.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(seed ^ splitmix64(h))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(7, "pcn"), derive_seed(7, "pcn"));
        assert_ne!(derive_seed(7, "pcn"), derive_seed(7, "grf"));
        assert_ne!(derive_seed(7, "pcn"), derive_seed(8, "pcn"));
        // pinned so that a silent change of the derivation shows up here
        assert_eq!(
            derive_seed(0, ""),
            splitmix64(splitmix64(0xcbf2_9ce4_8422_2325))
        );
    }

    #[test]
    fn same_seed_same_stream() {
        let a: Vec<u64> = (0..4)
            .map({
                let mut r = rng_from_seed(3);
                move |_| r.random()
            })
            .collect();
        let b: Vec<u64> = (0..4)
            .map({
                let mut r = rng_from_seed(3);
                move |_| r.random()
            })
            .collect();
        assert_eq!(a, b);
    }
}
