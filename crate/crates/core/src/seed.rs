//! Seed derivation. Every random stream in the pipeline is derived from one
//! global seed mixed with a stage name (and optionally an index), so stages
//! stay independent and reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the stage name.
fn stage_hash(stage: &str) -> u64 {
    stage.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// splitmix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stage: &str) -> u64 {
    mix(seed ^ stage_hash(stage))
}

pub fn derive_indexed(seed: u64, stage: &str, index: u64) -> u64 {
    mix(derive_seed(seed, stage) ^ mix(index))
}

pub fn rng_for(seed: u64, stage: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stage))
}

pub fn rng_indexed(seed: u64, stage: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_indexed(seed, stage, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stages_and_indices_diverge() {
        assert_ne!(derive_seed(1, "gen"), derive_seed(1, "degrade"));
        assert_ne!(derive_indexed(1, "gen", 0), derive_indexed(1, "gen", 1));
        assert_eq!(derive_seed(42, "train"), derive_seed(42, "train"));
    }
}
