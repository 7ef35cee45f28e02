//! Seed derivation. Every random stream in a run descends from one root
//! seed and a stable label, so adding a stream never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the label bytes.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Independent generator for `(seed, label)`.
pub fn stream(seed: u64, label: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label_hash(label));
    rng
}

/// Child seed for `(seed, label)`, for APIs that take a plain `u64`.
pub fn child_seed(seed: u64, label: &str) -> u64 {
    use rand::RngCore;
    stream(seed, label).next_u64()
}
