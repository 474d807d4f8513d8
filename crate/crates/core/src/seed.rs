//! Stateless, platform-independent seeding.
//!
//! All randomness in the crate is derived from a single root seed. A
//! component obtains its own stream with [`derive`], which mixes the root
//! seed with a label through FNV-1a and SplitMix64:
//!
//! ```text
//! sub_seed = splitmix64(root ^ fnv1a(label))
//! ```
//!
//! Synthetic agents go one step further and draw every value from a hash of
//! `(seed, labels...)`, so outputs never depend on call order or thread
//! scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sub-seed for the component named `label`.
pub fn derive(root: u64, label: &str) -> u64 {
    splitmix64(root ^ fnv1a(label.as_bytes()))
}

/// Hash of a seed and an ordered list of labels.
pub fn hash_parts(seed: u64, parts: &[&str]) -> u64 {
    parts.iter().fold(splitmix64(seed), |h, p| {
        // separator keeps ("ab","c") and ("a","bc") apart
        splitmix64(h ^ fnv1a(p.as_bytes()) ^ 0x1f)
    })
}

/// Uniform draw in `[0, 1)` keyed by `(seed, parts)`.
pub fn unit(seed: u64, parts: &[&str]) -> f64 {
    (hash_parts(seed, parts) >> 11) as f64 / (1u64 << 53) as f64
}

/// Standard normal draw keyed by `(seed, parts)` (Box-Muller).
pub fn normal(seed: u64, parts: &[&str]) -> f64 {
    let h = hash_parts(seed, parts);
    let u1 = ((splitmix64(h) >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
    let u2 = (splitmix64(h ^ 0x5555) >> 11) as f64 / (1u64 << 53) as f64;
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn rng(root: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(root, label))
}
