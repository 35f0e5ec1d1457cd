//! Small dense linear-algebra helpers shared by the filters.

use nalgebra::{Cholesky, DMatrix, SMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Returns `(m + mᵀ) / 2`.
pub fn symmetrize<T: Real, const D: usize>(m: &SMatrix<T, D, D>) -> SMatrix<T, D, D> {
    (m + m.transpose()) * T::lit(0.5)
}

/// Lower Cholesky factor. On failure a jitter of `1e-9 · trace · I` is added
/// and the factorization retried once.
pub fn cholesky_with_jitter<T: Real, const D: usize>(
    m: &SMatrix<T, D, D>,
) -> Result<SMatrix<T, D, D>> {
    if let Some(c) = Cholesky::new(*m) {
        return Ok(c.l());
    }
    let jitter = T::lit(1e-9) * m.trace().abs().max(T::default_epsilon());
    let shifted = m + SMatrix::<T, D, D>::identity() * jitter;
    Cholesky::new(shifted)
        .map(|c| c.l())
        .ok_or_else(|| Error::numeric("Cholesky factorization failed after jitter"))
}

/// A square root `S` with `S·Sᵀ = m` for any symmetric positive semidefinite
/// matrix, including singular ones (a zero matrix yields a zero root).
pub fn psd_sqrt<T: Real, const D: usize>(m: &SMatrix<T, D, D>) -> SMatrix<T, D, D> {
    if let Some(c) = Cholesky::new(*m) {
        return c.l();
    }
    let eig = eigen(m);
    SMatrix::from_fn(|i, j| eig.eigenvectors[(i, j)] * eig.eigenvalues[j].max(T::zero()).sqrt())
}

fn eigen<T: Real, const D: usize>(m: &SMatrix<T, D, D>) -> SymmetricEigen<T, nalgebra::Dyn> {
    let sym = symmetrize(m);
    SymmetricEigen::new(DMatrix::from_fn(D, D, |i, j| sym[(i, j)]))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue<T: Real, const D: usize>(m: &SMatrix<T, D, D>) -> T {
    eigen(m)
        .eigenvalues
        .iter()
        .copied()
        .reduce(|a, b| a.min(b))
        .unwrap_or_else(T::zero)
}

/// True when `m` is symmetric and its smallest eigenvalue is at least
/// `-tol · max(trace, 1)`.
pub fn is_psd<T: Real, const D: usize>(m: &SMatrix<T, D, D>, tol: T) -> bool {
    let scale = m.trace().abs().max(T::one());
    let asym = (m - m.transpose()).amax();
    asym <= tol * scale && min_eigenvalue(m) >= -tol * scale
}
