//! Seed derivation and the generator every sampled parameter is drawn from.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Platform-stable generator used for all parameter sampling.
pub type SampleRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 output finalizer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of sample `index` from the run's global seed.
///
/// The global seed is mixed before the index is folded in, so
/// `(s, i)` and `(s ^ 1, i ^ 1)` do not collide.
pub fn derive_seed(global_seed: u64, index: u64) -> u64 {
    mix64(mix64(global_seed) ^ index)
}

pub fn sample_rng(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derive_seed_is_deterministic_and_distinct() {
        assert_eq!(derive_seed(42, 7), derive_seed(42, 7));
        assert_ne!(derive_seed(42, 7), derive_seed(42, 8));
        assert_ne!(derive_seed(42, 7), derive_seed(43, 7));
        assert_ne!(derive_seed(0, 1), derive_seed(1, 0));
    }

    #[test]
    fn derive_seed_frozen_values() {
        // Frozen so any change to the mixing shows up as a reproducibility break.
        assert_eq!(derive_seed(0, 0), mix64(mix64(0)));
        assert_eq!(mix64(0), 0xe220_a839_7b1d_cdaf);
    }

    #[test]
    fn no_collisions_on_small_grid() {
        let mut seen = std::collections::HashSet::new();
        for s in 0..64u64 {
            for i in 0..256u64 {
                assert!(seen.insert(derive_seed(s, i)));
            }
        }
    }

    #[test]
    fn rng_replays() {
        let a: Vec<u32> = sample_rng(9).random_iter().take(8).collect();
        let b: Vec<u32> = sample_rng(9).random_iter().take(8).collect();
        assert_eq!(a, b);
    }
}
