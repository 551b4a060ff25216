//! Counter-based hashing for reproducible lattice randomness.
//!
//! Every random quantity is a pure function of `(seed, stream, coordinates)`,
//! so values do not depend on traversal order, thread count or platform.
//! The mixer is the SplitMix64 finalizer applied once per folded word.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed, e.g. one per Monte Carlo sample.
#[inline]
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(mix64(seed ^ GOLDEN) ^ index.wrapping_mul(GOLDEN).wrapping_add(0xD1B5_4A32_D192_ED03))
}

/// Hash of a lattice site given as a base point and a height.
#[inline]
pub fn site_hash(seed: u64, stream: u64, base: &[i64], height: i64) -> u64 {
    let mut h = mix64(seed ^ stream.wrapping_mul(0xA076_1D64_78BD_642F));
    for &c in base {
        h = mix64(h.wrapping_add(GOLDEN) ^ c as u64);
    }
    mix64(h.wrapping_add(GOLDEN) ^ height as u64)
}

/// Hash of a lattice site given as a full coordinate vector; agrees with
/// [`site_hash`] on `(coords[..n-1], coords[n-1])`.
#[inline]
pub fn point_hash(seed: u64, stream: u64, coords: &[i64]) -> u64 {
    let (last, base) = coords.split_last().expect("non-empty coordinates");
    site_hash(seed, stream, base, *last)
}

/// Top 53 bits as a uniform in `[0, 1)`.
#[inline]
pub fn unit(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal from two hash words by Box–Muller, cosine branch.
///
/// Uses `libm` so the transform is bit-identical across platforms.
#[inline]
pub fn standard_normal(h1: u64, h2: u64) -> f64 {
    let u1 = unit(h1);
    let u2 = unit(h2);
    let r = (-2.0 * libm::log(1.0 - u1)).sqrt();
    r * libm::cos(std::f64::consts::TAU * u2)
}

/// Seeded general-purpose generator for randomized tests, bootstraps and
/// synthetic inputs (not used for landscapes).
pub fn generator(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
