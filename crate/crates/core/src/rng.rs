//! Counter-based pseudo-random draws.
//!
//! Every random quantity in the crate is addressed by a `(key, index)` pair
//! and produced by the SplitMix64 finalizer, so a value never depends on how
//! many other draws happened before it. The algorithm is pure 64-bit integer
//! arithmetic and therefore reproduces bit-for-bit on every platform.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output mixing function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The `index`-th 64-bit word of the stream keyed by `key`.
#[inline]
pub fn draw_u64(key: u64, index: u64) -> u64 {
    let base = mix64(key ^ 0x6A09_E667_F3BC_C909);
    mix64(base.wrapping_add(GOLDEN_GAMMA.wrapping_mul(index.wrapping_add(1))))
}

/// Uniform draw in `[0, 1)` with 53 bits of precision.
#[inline]
pub fn draw_unit(key: u64, index: u64) -> f64 {
    (draw_u64(key, index) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw in `[lo, hi)`.
#[inline]
pub fn draw_range(key: u64, index: u64, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * draw_unit(key, index)
}

/// Standard normal draw via Box-Muller, consuming indices `index` and `index + 1`.
pub fn draw_normal(key: u64, index: u64) -> f64 {
    // 1 - u keeps the logarithm argument in (0, 1].
    let u1 = 1.0 - draw_unit(key, index);
    let u2 = draw_unit(key, index.wrapping_add(1));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Derives a child key from a parent key and a path of integers.
pub fn derive_key(parent: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(mix64(parent), |acc, &p| draw_u64(acc, p))
}

/// Deterministic Fisher-Yates permutation of `0..len`.
pub fn permutation(key: u64, len: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    for i in (1..len).rev() {
        let j = (draw_u64(key, i as u64) % (i as u64 + 1)) as usize;
        idx.swap(i, j);
    }
    idx
}
