//! General marginalized particle filter recursions for a 2-D nonlinear and
//! 1-D linear state.
//!
//! The model is
//!
//! ```text
//! xⁿ' = fⁿ(xⁿ) + Aⁿ·xˡ + Gⁿ·wⁿ
//! xˡ' = fˡ + Aˡ·xˡ + Gˡ·wˡ
//! y   = h(xⁿ) + C·xˡ + e
//! Cov(wˡ, wⁿ) = [[Qˡ, Qˡⁿ], [Qˡⁿᵀ, Qⁿ]],   Cov(e) = R
//! ```
//!
//! with the time update
//!
//! ```text
//! N  = Aⁿ P Aⁿᵀ + Gⁿ Qⁿ Gⁿᵀ
//! Āˡ = Aˡ − Gˡ Qˡⁿ (Gⁿ Qⁿ)⁻¹ Aⁿ
//! Q̄ˡ = Qˡ − Qˡⁿ (Qⁿ)⁻¹ Qˡⁿᵀ
//! z  = xⁿ' − fⁿ
//! L  = Āˡ P Aⁿᵀ N⁻¹
//! x̂' = Āˡ x̂ + Gˡ Qˡⁿ (Gⁿ Qⁿ)⁻¹ z + fˡ + L (z − Aⁿ x̂)
//! P' = Āˡ P Āˡᵀ + Gˡ Q̄ˡ Gˡᵀ − L N Lᵀ
//! ```
//!
//! and `xⁿ'` sampled from `N(fⁿ + Aⁿ x̂, N)`. Singular blocks are inverted
//! with the Moore-Penrose pseudo-inverse. It is written for clarity and
//! consumes random numbers in the same order as [`super::MpfParticleSet`].

use nalgebra::{Matrix1, Matrix1x2, Matrix2, Matrix2x1, Vector1, Vector2};
use rand::Rng;

use crate::error::Result;
use crate::grid::BathymetryGrid;
use crate::linalg::psd_sqrt;
use crate::models::{Measurement, Motion};
use crate::resample::normalize;
use crate::rng::correlated_normal;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralModel<T: Real> {
    pub motion: Motion<T>,
    pub dt: T,
    pub a_n: Matrix2x1<T>,
    pub a_l: Matrix1<T>,
    pub g_n: Matrix2<T>,
    pub g_l: Matrix1<T>,
    pub q_n: Matrix2<T>,
    pub q_l: Matrix1<T>,
    pub q_ln: Matrix1x2<T>,
    pub c: Matrix2x1<T>,
    pub r: Matrix2<T>,
}

impl<T: Real> GeneralModel<T> {
    /// The general model matching [`super::MpfModel`].
    pub fn from_reduced(m: &super::MpfModel<T>) -> Self {
        Self {
            motion: m.motion,
            dt: m.dt,
            a_n: Matrix2x1::zeros(),
            a_l: Matrix1::identity(),
            g_n: Matrix2::identity(),
            g_l: Matrix1::identity(),
            q_n: m.q_n,
            q_l: Matrix1::new(m.q_l),
            q_ln: Matrix1x2::zeros(),
            c: Matrix2x1::new(T::one(), -T::one()),
            r: m.r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralParticle<T: Real> {
    pub xn: Vector2<T>,
    pub xl: Vector1<T>,
    pub p: Matrix1<T>,
}

fn pinv2<T: Real>(m: &Matrix2<T>) -> Matrix2<T> {
    m.pseudo_inverse(T::lit(1e-300))
        .unwrap_or_else(|_| Matrix2::zeros())
}

/// Likelihood weighting, Kalman measurement update and normalization. Off-map
/// particles get weight zero.
pub fn measurement_update<T: Real>(
    particles: &mut [GeneralParticle<T>],
    weights: &mut [T],
    y: &Measurement<T>,
    grid: &BathymetryGrid<T>,
    model: &GeneralModel<T>,
) -> Result<bool> {
    let y = y.to_vector();
    for (part, w) in particles.iter_mut().zip(weights.iter_mut()) {
        let Ok(height) = grid.height_at(part.xn.x, part.xn.y) else {
            *w = T::zero();
            continue;
        };
        let h = Vector2::new(T::zero(), height);
        let m = model.c * part.p * model.c.transpose() + model.r;
        let m_inv = m
            .try_inverse()
            .ok_or_else(|| crate::error::Error::numeric("innovation covariance is singular"))?;
        let resid = y - h - model.c * part.xl;
        let quad = (resid.transpose() * m_inv * resid)[(0, 0)];
        *w *= (-quad / T::lit(2.0)).exp() / (T::two_pi() * m.determinant().sqrt());
        let k = part.p * model.c.transpose() * m_inv;
        part.xl += k * resid;
        part.p -= k * m * k.transpose();
    }
    Ok(normalize(weights))
}

/// Samples the nonlinear state and runs the linear time update for each
/// particle. Off-map particles are left in place.
pub fn time_update<T: Real, R: Rng + ?Sized>(
    particles: &mut [GeneralParticle<T>],
    grid: &BathymetryGrid<T>,
    model: &GeneralModel<T>,
    rng: &mut R,
) {
    let gq = model.g_n * model.q_n;
    let gq_inv = pinv2(&gq);
    let q_n_inv = pinv2(&model.q_n);
    let a_bar = model.a_l - model.g_l * model.q_ln * gq_inv * model.a_n;
    let q_bar = model.q_l - model.q_ln * q_n_inv * model.q_ln.transpose();
    let f_l = Vector1::new(model.motion.vz() * model.dt);
    for part in particles.iter_mut() {
        let n = model.a_n * part.p * model.a_n.transpose()
            + model.g_n * model.q_n * model.g_n.transpose();
        let root = psd_sqrt(&n);
        let noise = correlated_normal(rng, &root);
        let Ok((fx, fy)) = model
            .motion
            .step_horizontal(part.xn.x, part.xn.y, grid, model.dt)
        else {
            part.xl = Vector1::new(part.xl.x + f_l.x);
            part.p += model.q_l;
            continue;
        };
        let f_n = Vector2::new(fx, fy);
        let xn_next = f_n + model.a_n * part.xl + noise;
        let z = xn_next - f_n;
        let gain = a_bar * part.p * model.a_n.transpose() * pinv2(&n);
        let xl = a_bar * part.xl
            + model.g_l * model.q_ln * gq_inv * z
            + f_l
            + gain * (z - model.a_n * part.xl);
        let p = a_bar * part.p * a_bar.transpose() + model.g_l * q_bar * model.g_l.transpose()
            - gain * n * gain.transpose();
        part.xn = xn_next;
        part.xl = xl;
        part.p = p;
    }
}
