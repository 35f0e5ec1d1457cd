//! Seed derivation and sampling helpers.
//!
//! Every replicate and every filter stream gets its own generator seeded from
//! `(master_seed, replicate, stream)`, so results never depend on execution
//! order or on how replicates are spread over worker threads.

use nalgebra::SVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::Real;

pub type FilterRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for `stream` of `replicate` under `master`.
pub fn derive_seed(master: u64, replicate: u64, stream: u64) -> u64 {
    mix64(mix64(mix64(master) ^ replicate) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn seeded(seed: u64) -> FilterRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn standard_normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::lit(rng.sample::<f64, _>(StandardNormal))
}

/// Draws `root · ξ` with `ξ ~ N(0, I)`.
pub fn correlated_normal<T: Real, R: Rng + ?Sized, const D: usize>(
    rng: &mut R,
    root: &nalgebra::SMatrix<T, D, D>,
) -> SVector<T, D> {
    let xi = SVector::<T, D>::from_fn(|_, _| standard_normal(rng));
    root * xi
}

/// Uniform draw in `[lo, hi)`; returns `lo` if the interval is empty.
pub fn uniform<T: Real, R: Rng + ?Sized>(rng: &mut R, lo: T, hi: T) -> T {
    let u: f64 = rng.random();
    lo + (hi - lo) * T::lit(u)
}
