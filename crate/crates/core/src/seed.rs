// SPDX-License-Identifier: Apache-2.0

//! Named sub-seeds. Every random component derives its own stream from the
//! run's master seed and a stable label, so components stay reproducible in
//! isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic RNG used everywhere in the crate.
pub type Rng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes `label` into `master` (FNV-1a over the label, then splitmix).
pub fn derive(master: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    splitmix64(master ^ splitmix64(h))
}

/// Sub-seed for the `index`-th member of a family (tree, replica, ...).
pub fn derive_indexed(master: u64, label: &str, index: usize) -> u64 {
    splitmix64(derive(master, label) ^ splitmix64(index as u64))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
