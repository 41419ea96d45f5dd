//! Deterministic randomness: every experiment draws from a single 64-bit
//! seed through counter-mode ChaCha streams, so runs are bit-exact across
//! platforms and labeled substreams stay independent of call order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The master stream of a seed.
pub fn master_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// An independent labeled substream of a seed: same key, stream index
/// derived from the label by FNV-1a.
pub fn sub_rng(seed: u64, label: &str) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in label.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(h);
    rng
}

/// Uniform permutation of [n] by Fisher–Yates.
pub fn uniform_permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<u32> {
    let mut p: Vec<u32> = (0..n as u32).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        p.swap(i, j);
    }
    p
}

/// Uniform fixed-point-free involution of [n] (n even): repeatedly match
/// the smallest unmatched point with a uniform other unmatched point.
pub fn uniform_matching(rng: &mut ChaCha8Rng, n: usize) -> Vec<u32> {
    assert!(n % 2 == 0, "matchings need an even point count");
    let mut perm = vec![u32::MAX; n];
    let mut free: Vec<u32> = (0..n as u32).rev().collect();
    while let Some(a) = free.pop() {
        let j = rng.gen_range(0..free.len());
        let b = free.swap_remove(j);
        perm[a as usize] = b;
        perm[b as usize] = a;
    }
    perm
}
