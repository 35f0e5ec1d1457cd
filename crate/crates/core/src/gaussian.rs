//! Extended and unscented Kalman filters over a 3-D position belief.

use nalgebra::{Matrix2, Matrix3, Matrix3x2, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Error;
use crate::grid::BathymetryGrid;
use crate::linalg::{cholesky_with_jitter, symmetrize};
use crate::models::{measure, measurement_jacobian, JacobianMode, Measurement, Motion, State};
use crate::scalar::Real;

/// Mean and covariance of the position estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBelief<T: Real> {
    pub mean: State<T>,
    pub cov: Matrix3<T>,
}

impl<T: Real> GaussianBelief<T> {
    pub fn new(mean: State<T>, cov: Matrix3<T>) -> Self {
        Self {
            mean,
            cov: symmetrize(&cov),
        }
    }
}

#[derive(Debug, Clone, Error)]
pub enum GaussianFilterError<T: Real> {
    /// The belief left the map. Carries the belief before the failing step.
    #[error("filter diverged: {cause}")]
    Diverged {
        last_valid: GaussianBelief<T>,
        cause: Error,
    },
    #[error(transparent)]
    Numeric(Error),
}

impl<T: Real> GaussianFilterError<T> {
    fn from_model(last_valid: &GaussianBelief<T>, cause: Error) -> Self {
        if cause.is_bounds() {
            GaussianFilterError::Diverged {
                last_valid: *last_valid,
                cause,
            }
        } else {
            GaussianFilterError::Numeric(cause)
        }
    }

    pub fn cause(&self) -> &Error {
        match self {
            GaussianFilterError::Diverged { cause, .. } => cause,
            GaussianFilterError::Numeric(e) => e,
        }
    }
}

type FilterResult<T> = Result<GaussianBelief<T>, GaussianFilterError<T>>;

/// Scaled unscented transform parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UkfParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UkfParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 2.0,
            kappa: 0.0,
        }
    }
}

impl UkfParams {
    pub const DIM: f64 = 3.0;

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.alpha > 0.0) {
            return Err(Error::value("UKF alpha must be positive"));
        }
        if !(self.alpha * self.alpha * (Self::DIM + self.kappa) > 0.0) {
            return Err(Error::value("UKF requires alpha²·(n + kappa) > 0"));
        }
        if !self.beta.is_finite() {
            return Err(Error::value("UKF beta must be finite"));
        }
        Ok(())
    }

    pub fn lambda(&self) -> f64 {
        self.alpha * self.alpha * (Self::DIM + self.kappa) - Self::DIM
    }
}

/// The `2n + 1 = 7` sigma points and their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaPoints<T: Real> {
    pub points: [Vector3<T>; 7],
    pub mean_weights: [T; 7],
    pub cov_weights: [T; 7],
}

impl<T: Real> SigmaPoints<T> {
    pub fn weighted_mean(&self) -> Vector3<T> {
        self.points
            .iter()
            .zip(&self.mean_weights)
            .fold(Vector3::zeros(), |acc, (p, &w)| acc + p * w)
    }

    pub fn weighted_cov(&self, mean: &Vector3<T>) -> Matrix3<T> {
        self.points
            .iter()
            .zip(&self.cov_weights)
            .fold(Matrix3::zeros(), |acc, (p, &w)| {
                let d = p - mean;
                acc + d * d.transpose() * w
            })
    }
}

pub fn ekf_predict<T: Real>(
    b: &GaussianBelief<T>,
    motion: &Motion<T>,
    q: &Matrix3<T>,
    grid: &BathymetryGrid<T>,
    dt: T,
) -> FilterResult<T> {
    let fail = |e| GaussianFilterError::from_model(b, e);
    let mean = motion.step(&b.mean, grid, dt).map_err(fail)?;
    let f = motion.jacobian(&b.mean, grid, dt).map_err(fail)?;
    let cov = f * b.cov * f.transpose() + q;
    Ok(GaussianBelief::new(mean, cov))
}

pub fn ekf_correct<T: Real>(
    b: &GaussianBelief<T>,
    z: &Measurement<T>,
    grid: &BathymetryGrid<T>,
    r: &Matrix2<T>,
    mode: JacobianMode,
) -> FilterResult<T> {
    let fail = |e| GaussianFilterError::from_model(b, e);
    let predicted = measure(grid, &b.mean).map_err(fail)?.to_vector();
    let h = measurement_jacobian(grid, &b.mean, mode).map_err(fail)?;
    let s = h * b.cov * h.transpose() + r;
    let s_inv = invert(&s)?;
    let k = b.cov * h.transpose() * s_inv;
    let mean = b.mean.to_vector() + k * (z.to_vector() - predicted);
    let cov = (Matrix3::identity() - k * h) * b.cov;
    Ok(GaussianBelief::new(State::from_vector(&mean), cov))
}

pub fn ukf_sigma_points<T: Real>(
    b: &GaussianBelief<T>,
    p: &UkfParams,
) -> Result<SigmaPoints<T>, Error> {
    p.validate()?;
    let n = T::lit(UkfParams::DIM);
    let lambda = T::lit(p.lambda());
    let root = cholesky_with_jitter(&(b.cov * (n + lambda)))?;
    let mean = b.mean.to_vector();
    let mut points = [mean; 7];
    for i in 0..3 {
        let col = root.column(i).into_owned();
        points[1 + i] = mean + col;
        points[4 + i] = mean - col;
    }
    let spread = T::lit(0.5) / (n + lambda);
    let mut mean_weights = [spread; 7];
    let mut cov_weights = [spread; 7];
    mean_weights[0] = lambda / (n + lambda);
    cov_weights[0] = mean_weights[0] + T::lit(1.0 - p.alpha * p.alpha + p.beta);
    Ok(SigmaPoints {
        points,
        mean_weights,
        cov_weights,
    })
}

pub fn ukf_predict<T: Real>(
    b: &GaussianBelief<T>,
    motion: &Motion<T>,
    q: &Matrix3<T>,
    grid: &BathymetryGrid<T>,
    dt: T,
    p: &UkfParams,
) -> FilterResult<T> {
    let mut sigma = ukf_sigma_points(b, p).map_err(GaussianFilterError::Numeric)?;
    for point in sigma.points.iter_mut() {
        let next = motion
            .step(&State::from_vector(point), grid, dt)
            .map_err(|e| GaussianFilterError::from_model(b, e))?;
        *point = next.to_vector();
    }
    let mean = sigma.weighted_mean();
    let cov = sigma.weighted_cov(&mean) + q;
    Ok(GaussianBelief::new(State::from_vector(&mean), cov))
}

pub fn ukf_correct<T: Real>(
    b: &GaussianBelief<T>,
    z: &Measurement<T>,
    grid: &BathymetryGrid<T>,
    r: &Matrix2<T>,
    p: &UkfParams,
) -> FilterResult<T> {
    let sigma = ukf_sigma_points(b, p).map_err(GaussianFilterError::Numeric)?;
    let mut gammas = [Vector2::zeros(); 7];
    for (gamma, point) in gammas.iter_mut().zip(&sigma.points) {
        *gamma = measure(grid, &State::from_vector(point))
            .map_err(|e| GaussianFilterError::from_model(b, e))?
            .to_vector();
    }
    let y_hat = gammas
        .iter()
        .zip(&sigma.mean_weights)
        .fold(Vector2::zeros(), |acc, (g, &w)| acc + g * w);
    let mean = b.mean.to_vector();
    let mut s = *r;
    let mut cross = Matrix3x2::zeros();
    for i in 0..7 {
        let dy = gammas[i] - y_hat;
        let dx = sigma.points[i] - mean;
        s += dy * dy.transpose() * sigma.cov_weights[i];
        cross += dx * dy.transpose() * sigma.cov_weights[i];
    }
    let s = symmetrize(&s);
    let k = cross * invert(&s)?;
    let new_mean = mean + k * (z.to_vector() - y_hat);
    let cov = b.cov - k * s * k.transpose();
    Ok(GaussianBelief::new(State::from_vector(&new_mean), cov))
}

fn invert<T: Real>(s: &Matrix2<T>) -> Result<Matrix2<T>, GaussianFilterError<T>> {
    let det = s.determinant();
    if !det.is_finite() || det.abs() <= T::default_epsilon() * s.amax() * s.amax() {
        return Err(GaussianFilterError::Numeric(Error::numeric(
            "innovation covariance is singular",
        )));
    }
    s.try_inverse().ok_or_else(|| {
        GaussianFilterError::Numeric(Error::numeric("innovation covariance is singular"))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;
    use crate::models::{default_p0, ControlInput, MixedMotionParams, NoiseConfig};
    use proptest::prelude::*;

    fn flat(h: f64) -> BathymetryGrid<f64> {
        BathymetryGrid::<f64>::from_fn(60, 60, 1.0, 0.0, 0.0, |_, _| h).unwrap()
    }

    fn sloped() -> BathymetryGrid<f64> {
        BathymetryGrid::<f64>::from_fn(60, 60, 1.0, 0.0, 0.0, |x, y| 10.0 + 0.2 * x - 0.1 * y)
            .unwrap()
    }

    fn bde_linear() -> Motion<f64> {
        Motion::Linear(ControlInput::new(1.0, -3.0, -0.1524))
    }

    #[test]
    fn ekf_predict_linear_adds_q() {
        let noise = NoiseConfig::from_velocity(1.0, -3.0, -0.1524);
        let b = GaussianBelief::new(State::new(0.0, 0.0, 0.0), noise.p0);
        let next = ekf_predict(&b, &bde_linear(), &noise.q, &flat(10.0), 1.0).unwrap();
        assert_eq!(next.mean, State::new(1.0, -3.0, -0.1524));
        assert!((next.cov - (noise.p0 + noise.q)).amax() < 1e-15);
    }

    #[test]
    fn ekf_predict_degenerate_mixed_keeps_cov() {
        let p = MixedMotionParams {
            a: 0.0,
            a_d: 1.0,
            a_off: 0.0,
            b: 0.0,
            b_d: 1.0,
            b_off: 0.0,
            vz: 0.1,
        };
        let cov = default_p0::<f64>();
        let b = GaussianBelief::new(State::new(30.0, 30.0, 2.0), cov);
        let next = ekf_predict(&b, &Motion::Mixed(p), &Matrix3::zeros(), &flat(8.0), 1.0).unwrap();
        assert_eq!(next.cov, cov);
        assert!((next.mean.pz - 2.1).abs() < 1e-15);
    }

    #[test]
    fn ekf_predict_out_of_bounds_diverges() {
        let p = MixedMotionParams {
            a: 1.0,
            a_d: 1.0,
            a_off: 0.0,
            b: 0.0,
            b_d: 1.0,
            b_off: 0.0,
            vz: 0.0,
        };
        let b = GaussianBelief::new(State::new(-5.0, 30.0, 2.0), default_p0());
        match ekf_predict(&b, &Motion::Mixed(p), &Matrix3::zeros(), &flat(8.0), 1.0) {
            Err(GaussianFilterError::Diverged { last_valid, .. }) => assert_eq!(last_valid, b),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn ekf_zero_innovation_shrinks_cov() {
        let g = sloped();
        let b = GaussianBelief::new(State::new(20.0, 20.0, 4.0), default_p0());
        let z = measure(&g, &b.mean).unwrap();
        let r = crate::models::default_r();
        let next = ekf_correct(&b, &z, &g, &r, JacobianMode::Analytic).unwrap();
        assert!((next.mean.to_vector() - b.mean.to_vector()).amax() < 1e-12);
        assert!(next.cov.trace() <= b.cov.trace());
    }

    #[test]
    fn ekf_huge_r_ignores_measurement() {
        let g = sloped();
        let b = GaussianBelief::new(State::new(20.0, 20.0, 4.0), default_p0());
        let z = Measurement::new(6.0, 3.0);
        let r = crate::models::default_r::<f64>() * 1e12;
        let next = ekf_correct(&b, &z, &g, &r, JacobianMode::Analytic).unwrap();
        assert!((next.mean.to_vector() - b.mean.to_vector()).amax() < 1e-6);
    }

    #[test]
    fn ekf_singular_innovation_is_numeric_error() {
        let g = flat(10.0);
        let b = GaussianBelief::new(State::new(20.0, 20.0, 4.0), Matrix3::zeros());
        let z = Measurement::new(4.0, 6.0);
        let err = ekf_correct(&b, &z, &g, &Matrix2::zeros(), JacobianMode::Analytic).unwrap_err();
        assert!(matches!(err, GaussianFilterError::Numeric(_)));
    }

    #[test]
    fn sigma_points_identity_cov() {
        let b = GaussianBelief::new(State::new(1.0, 2.0, 3.0), Matrix3::identity());
        let sp = ukf_sigma_points(&b, &UkfParams::default()).unwrap();
        assert_eq!(sp.points.len(), 7);
        let r3 = 3f64.sqrt();
        for i in 0..3 {
            let mut e = Vector3::zeros();
            e[i] = r3;
            assert!((sp.points[1 + i] - (b.mean.to_vector() + e)).amax() < 1e-12);
            assert!((sp.points[4 + i] - (b.mean.to_vector() - e)).amax() < 1e-12);
        }
        assert!((sp.weighted_mean() - b.mean.to_vector()).amax() < 1e-15);
    }

    #[test]
    fn sigma_points_reject_bad_params() {
        let b = GaussianBelief::new(State::new(1.0, 2.0, 3.0), Matrix3::identity());
        let p = UkfParams {
            alpha: 1.0,
            beta: 2.0,
            kappa: -3.0,
        };
        assert!(ukf_sigma_points(&b, &p).is_err());
        let b = GaussianBelief::new(State::new(1.0, 2.0, 3.0), -Matrix3::identity());
        assert!(ukf_sigma_points(&b, &UkfParams::default()).is_err());
    }

    #[test]
    fn ukf_predict_matches_ekf_on_linear_motion() {
        let noise = NoiseConfig::from_velocity(1.0, -3.0, -0.1524);
        let cov = Matrix3::new(1.0, 0.2, 0.05, 0.2, 0.8, -0.1, 0.05, -0.1, 0.3);
        let b = GaussianBelief::new(State::new(30.0, 30.0, 2.0), cov);
        let g = flat(9.0);
        let e = ekf_predict(&b, &bde_linear(), &noise.q, &g, 1.0).unwrap();
        let u = ukf_predict(&b, &bde_linear(), &noise.q, &g, 1.0, &UkfParams::default()).unwrap();
        assert!((e.mean.to_vector() - u.mean.to_vector()).amax() < 1e-12);
        assert!((e.cov - u.cov).amax() < 1e-12);
    }

    #[test]
    fn ukf_predict_flat_degenerate_mixed() {
        let p = MixedMotionParams {
            a: 0.0,
            a_d: 1.0,
            a_off: 0.0,
            b: 0.0,
            b_d: 1.0,
            b_off: 0.0,
            vz: -0.25,
        };
        let b = GaussianBelief::new(State::new(30.0, 30.0, 2.0), default_p0());
        let next = ukf_predict(
            &b,
            &Motion::Mixed(p),
            &Matrix3::zeros(),
            &flat(8.0),
            2.0,
            &UkfParams::default(),
        )
        .unwrap();
        assert!((next.mean.pz - 1.5).abs() < 1e-12);
        assert!((next.cov - b.cov).amax() < 1e-12);
    }

    #[test]
    fn ukf_zero_innovation_on_flat_lake() {
        let g = flat(12.0);
        let b = GaussianBelief::new(State::new(20.0, 20.0, 4.0), default_p0());
        let z = measure(&g, &b.mean).unwrap();
        let next = ukf_correct(
            &b,
            &z,
            &g,
            &crate::models::default_r(),
            &UkfParams::default(),
        )
        .unwrap();
        assert!((next.mean.to_vector() - b.mean.to_vector()).amax() < 1e-9);
    }

    #[test]
    fn works_in_f32() {
        let g =
            BathymetryGrid::<f32>::from_fn(40, 40, 1.0, 0.0, 0.0, |x, _| 5.0 + 0.1 * x).unwrap();
        let noise = NoiseConfig::<f32>::from_velocity(1.0, 0.5, 0.1);
        let b = GaussianBelief::new(State::new(10.0f32, 10.0, 1.0), noise.p0);
        let m = Motion::Linear(ControlInput::new(1.0f32, 0.5, 0.1));
        let b = ekf_predict(&b, &m, &noise.q, &g, 1.0).unwrap();
        let z = measure(&g, &b.mean).unwrap();
        let b = ukf_correct(&b, &z, &g, &noise.r, &UkfParams::default()).unwrap();
        assert!((b.mean.px - 11.0).abs() < 1e-4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn sigma_points_reproduce_moments(
            l in proptest::collection::vec(-1.0f64..1.0, 6),
            d in proptest::collection::vec(0.05f64..2.0, 3),
            mean in proptest::collection::vec(-50.0f64..50.0, 3),
            alpha in 0.3f64..1.5,
            kappa in 0.0f64..2.0,
        ) {
            let lower = Matrix3::new(d[0], 0.0, 0.0, l[0], d[1], 0.0, l[1], l[2], d[2]);
            let cov = lower * lower.transpose();
            let b = GaussianBelief::new(State::new(mean[0], mean[1], mean[2]), cov);
            let p = UkfParams { alpha, beta: 2.0, kappa };
            let sp = ukf_sigma_points(&b, &p).unwrap();
            let m = sp.weighted_mean();
            prop_assert!((m - b.mean.to_vector()).amax() <= 1e-9 * (1.0 + b.mean.to_vector().amax()));
            // Remove the (1 - α² + β) correction to recover the plain
            // second moment.
            let mut plain = sp.clone();
            plain.cov_weights[0] = plain.mean_weights[0];
            let c = plain.weighted_cov(&m);
            prop_assert!((c - b.cov).amax() <= 1e-9 * b.cov.amax());
        }

        #[test]
        fn covariance_stays_symmetric_psd(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = BathymetryGrid::<f64>::from_fn(80, 80, 1.0, 0.0, 0.0, |x, y| {
                10.0 + 3.0 * (x / 9.0).sin() + 2.0 * (y / 7.0).cos()
            }).unwrap();
            let noise = NoiseConfig::from_velocity(0.4, -0.3, -0.1524);
            let mut e = GaussianBelief::new(State::new(40.0, 40.0, 3.0), noise.p0);
            let mut u = e;
            let m = Motion::Linear(ControlInput::new(0.1, -0.1, 0.0));
            for _ in 0..10 {
                let z = Measurement::new(3.0 + rng.random_range(-0.5..0.5), rng.random_range(4.0..12.0));
                e = ekf_predict(&e, &m, &noise.q, &g, 1.0).unwrap();
                e = ekf_correct(&e, &z, &g, &noise.r, JacobianMode::Analytic).unwrap();
                u = ukf_predict(&u, &m, &noise.q, &g, 1.0, &UkfParams::default()).unwrap();
                u = ukf_correct(&u, &z, &g, &noise.r, &UkfParams::default()).unwrap();
                for c in [e.cov, u.cov] {
                    prop_assert_eq!(c, c.transpose());
                    prop_assert!(min_eigenvalue(&c) >= -1e-9 * c.trace());
                }
            }
        }
    }
}
