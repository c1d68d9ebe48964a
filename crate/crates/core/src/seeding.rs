//! Named seed derivation and per-node randomness streams.
//!
//! Every random draw in the crate comes from a stream whose seed is derived
//! from a root seed plus a label and an index, so results never depend on
//! scheduling or worker count. Instance trees use a chained SplitMix64
//! finalizer over the action prefix: each step mixes in both the action and
//! the new depth, so distinct prefixes (including prefixes of each other)
//! get unrelated streams.

use rand::SeedableRng;
use rand_xoshiro::{SplitMix64, Xoshiro256PlusPlus};

/// Weyl increment of SplitMix64.
pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output finalizer (Steele, Lea & Flood 2014).
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the label bytes, finalized with [`mix64`].
pub fn hash_label(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix64(h)
}

/// Seed for the `index`-th stream of component `label` under `root`.
pub fn derive_seed(root: u64, label: &str, index: u64) -> u64 {
    mix64(mix64(root ^ hash_label(label)).wrapping_add(index.wrapping_mul(GOLDEN_GAMMA)))
}

/// General-purpose stream for training, evaluation and sampling loops.
pub fn stream(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

pub fn named_stream(root: u64, label: &str, index: u64) -> Xoshiro256PlusPlus {
    stream(derive_seed(root, label, index))
}

/// Key of the root node of the instance with seed `instance_seed`.
#[inline]
pub fn root_key(instance_seed: u64) -> u64 {
    mix64(instance_seed ^ hash_label("root"))
}

/// Key of the child reached by `action` from a node with key `parent`;
/// `depth` is the length of the child's action prefix.
#[inline]
pub fn child_key(parent: u64, depth: u32, action: usize) -> u64 {
    let tag = (action as u64 + 1) | (u64::from(depth) << 32);
    mix64(parent ^ tag.wrapping_mul(GOLDEN_GAMMA))
}

/// Stream used to draw the content of a single tree node.
#[inline]
pub fn node_stream(key: u64) -> SplitMix64 {
    SplitMix64::seed_from_u64(key)
}

/// Key for an arbitrary action prefix, equal to folding [`child_key`] from
/// the root.
pub fn prefix_key(instance_seed: u64, actions: &[usize]) -> u64 {
    actions
        .iter()
        .enumerate()
        .fold(root_key(instance_seed), |key, (i, &a)| child_key(key, i as u32 + 1, a))
}
