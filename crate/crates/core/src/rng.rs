//! Seeded random streams.
//!
//! Every random consumer gets its own ChaCha stream addressed by a 64-bit key
//! and a stream index, so results never depend on execution order or on how
//! work is spread across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

pub type SimRng = ChaCha12Rng;

/// Rng for `(seed, stream)`. Distinct streams of one seed never overlap.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive hash of a sequence of words, stable across platforms and releases.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x6a09_e667_f3bc_c908_u64, |acc, &p| {
        splitmix64(acc ^ splitmix64(p))
    })
}

/// FNV-1a over the bytes of a label.
pub fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325_u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

#[inline]
pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Draw from Gamma(shape, rate). Panics on non-positive parameters; callers validate.
#[inline]
pub fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("gamma parameters validated by caller")
        .sample(rng)
}

/// Draw from Inverse-Gamma(shape, scale) with density ∝ x^{-shape-1} exp(-scale/x).
#[inline]
pub fn inv_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    1.0 / gamma(rng, shape, scale)
}

#[inline]
pub fn chi_square<R: Rng + ?Sized>(rng: &mut R, df: f64) -> f64 {
    gamma(rng, 0.5 * df, 0.5)
}
