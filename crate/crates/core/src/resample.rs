//! Weight normalization and systematic resampling shared by both particle
//! filters.

use rand::Rng;

use crate::scalar::Real;

/// Total weight below which a set is treated as degenerate.
pub const DEGENERATE_TOTAL: f64 = 1e-300;

/// Scales `weights` to sum to one. Returns `true` if the set was degenerate
/// (total below [`DEGENERATE_TOTAL`] or not finite); the weights are then
/// reset to uniform.
pub fn normalize<T: Real>(weights: &mut [T]) -> bool {
    let n = weights.len();
    if n == 0 {
        return false;
    }
    let total = weights.iter().fold(T::zero(), |acc, &w| acc + w);
    if !total.is_finite() || total <= T::lit(DEGENERATE_TOTAL) || total <= T::zero() {
        let uniform = T::one() / T::from_usize_lossy(n);
        weights.iter_mut().for_each(|w| *w = uniform);
        return true;
    }
    weights.iter_mut().for_each(|w| *w /= total);
    false
}

/// Effective sample size `1 / Σw²` for normalized weights.
pub fn effective_sample_size<T: Real>(weights: &[T]) -> T {
    let sum_sq = weights.iter().fold(T::zero(), |acc, &w| acc + w * w);
    if sum_sq > T::zero() {
        T::one() / sum_sq
    } else {
        T::zero()
    }
}

/// Draws `count` ancestor indices by systematic (low-variance) resampling:
/// one uniform offset `u ∈ [0, 1/count)` and `count` evenly spaced points on
/// the cumulative weight axis.
pub fn systematic_indices<T: Real, R: Rng + ?Sized>(
    weights: &[T],
    count: usize,
    rng: &mut R,
) -> Vec<usize> {
    let n = weights.len();
    if n == 0 || count == 0 {
        return Vec::new();
    }
    let total = weights.iter().fold(0.0, |acc, w| acc + w.as_f64());
    let step = total / count as f64;
    let offset: f64 = rng.random::<f64>() * step;
    let mut indices = Vec::with_capacity(count);
    let mut i = 0;
    let mut cumulative = weights[0].as_f64();
    for k in 0..count {
        let target = offset + k as f64 * step;
        while cumulative <= target && i + 1 < n {
            i += 1;
            cumulative += weights[i].as_f64();
        }
        indices.push(i);
    }
    indices
}

/// Number of injected particles for a set of `n` particles:
/// `n − ⌈(1 − fraction)·n⌉`.
pub fn injection_count(n: usize, fraction: f64) -> usize {
    if !(fraction > 0.0) {
        return 0;
    }
    let fraction = fraction.min(1.0);
    // Tolerate decimal fractions like 0.05 that are not exact in binary.
    let raw = fraction * n as f64;
    let nearest = raw.round();
    let injected = if (raw - nearest).abs() < 1e-9 {
        nearest
    } else {
        raw.floor()
    };
    (injected as usize).min(n)
}
