use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stable 64-bit key for `(seed, id)`; FNV-1a over the id bytes, then mixed with the seed.
pub fn derive_seed(seed: u64, id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    // splitmix64 finalizer
    let mut z = h ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform draw over the classes other than `prediction`, fixed per `(sample_id, seed)`.
///
/// Panics if `n_classes < 2` or `prediction >= n_classes`.
pub fn sample_target(prediction: usize, n_classes: usize, sample_id: &str, seed: u64) -> usize {
    assert!(n_classes >= 2 && prediction < n_classes, "need two classes and a valid prediction");
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, sample_id));
    let r = rng.gen_range(0..n_classes - 1);
    if r >= prediction {
        r + 1
    } else {
        r
    }
}
