//! Named random sub-streams derived from a single root seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Named streams used across the toolkit.
pub const SPLIT: &str = "split";
pub const INIT: &str = "init";
pub const DROPOUT: &str = "dropout";
pub const AUGMENT: &str = "augment";
pub const SHUFFLE: &str = "shuffle";
pub const LIME: &str = "lime";
pub const SYNTH: &str = "synth";

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a sub-seed from `root` and a stream name (FNV-1a over the name).
pub fn derive(root: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix(root ^ splitmix(h))
}

/// Derives a sub-seed for item `index` of a stream.
pub fn derive_index(root: u64, index: u64) -> u64 {
    splitmix(root ^ splitmix(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

pub fn stream(root: u64, name: &str) -> Rng {
    Rng::seed_from_u64(derive(root, name))
}

pub fn indexed(root: u64, index: u64) -> Rng {
    Rng::seed_from_u64(derive_index(root, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_differ_by_name() {
        assert_ne!(derive(7, INIT), derive(7, DROPOUT));
        assert_eq!(derive(7, INIT), derive(7, INIT));
        assert_ne!(derive_index(7, 0), derive_index(7, 1));
    }
}
