//! Seed derivation. Every random stream in the crate is keyed by a base seed
//! plus a label, so adding or removing one consumer never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a string label and integer coordinates.
pub fn derive_seed(seed: u64, label: &str, coords: &[u64]) -> u64 {
    let mut h = splitmix(seed);
    for b in label.bytes() {
        h = splitmix(h ^ u64::from(b));
    }
    for &c in coords {
        h = splitmix(h ^ c);
    }
    h
}

pub fn stream(seed: u64, label: &str, coords: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, label, coords))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream(7, "init", &[1]).random();
        let b: u64 = stream(7, "init", &[1]).random();
        let c: u64 = stream(7, "init", &[2]).random();
        let d: u64 = stream(7, "inis", &[1]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
