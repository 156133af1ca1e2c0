//! Deterministic seed derivation for per-task RNG streams.
//!
//! Every random stream in a run is a pure function of the master seed and a
//! task label, so results do not depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TaskRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of task coordinates into a child seed.
pub fn derive(master: u64, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(mix(master), |acc, &c| mix(acc ^ mix(c)))
}

/// Seed keyed by the content of an asset sequence, so identical orders share
/// a random stream.
pub fn derive_for_sequence(master: u64, tag: u64, sequence: &[usize]) -> u64 {
    let mut h = derive(master, &[tag, sequence.len() as u64]);
    for &a in sequence {
        h = mix(h ^ (a as u64).wrapping_mul(0x100_0000_01B3));
    }
    h
}

pub fn rng(seed: u64) -> TaskRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_separates_coordinates() {
        let a = derive(7, &[1, 2]);
        let b = derive(7, &[2, 1]);
        let c = derive(8, &[1, 2]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive(7, &[1, 2]));
    }

    #[test]
    fn sequence_seed_depends_on_order() {
        assert_ne!(
            derive_for_sequence(1, 0, &[0, 1, 2]),
            derive_for_sequence(1, 0, &[1, 0, 2])
        );
    }
}
