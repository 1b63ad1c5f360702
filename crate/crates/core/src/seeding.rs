//! Root-seed fan-out into named, independent sub-streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// One round of the splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Derives the seed of the sub-stream `name` from `root`.
pub fn derive(root: u64, name: &str) -> u64 {
    mix64(root ^ mix64(fnv1a(name)))
}

/// Derives a seed from `root` and a sequence of integer coordinates
/// (epoch, sample index, ...).
pub fn derive_indexed(root: u64, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(mix64(root), |acc, &c| mix64(acc ^ mix64(c)))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn named_rng(root: u64, name: &str) -> Rng {
    rng(derive(root, name))
}
