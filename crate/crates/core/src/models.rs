//! Vehicle state, motion models and the depth/altitude measurement model.
//!
//! All functions here are noiseless; process and measurement noise are
//! injected by the simulator and the filters.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BathymetryGrid, FEET_TO_METERS};
use crate::scalar::Real;

/// Vehicle position. `pz` is depth below the surface, positive downward.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct State<T> {
    pub px: T,
    pub py: T,
    pub pz: T,
}

impl<T: Real> State<T> {
    pub fn new(px: T, py: T, pz: T) -> Self {
        Self { px, py, pz }
    }

    pub fn to_vector(self) -> Vector3<T> {
        Vector3::new(self.px, self.py, self.pz)
    }

    pub fn from_vector(v: &Vector3<T>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn is_finite(&self) -> bool {
        self.px.is_finite() && self.py.is_finite() && self.pz.is_finite()
    }
}

/// Velocity command in m/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlInput<T> {
    pub vx: T,
    pub vy: T,
    pub vz: T,
}

impl<T: Real> ControlInput<T> {
    pub fn new(vx: T, vy: T, vz: T) -> Self {
        Self { vx, vy, vz }
    }

    pub fn to_vector(self) -> Vector3<T> {
        Vector3::new(self.vx, self.vy, self.vz)
    }
}

/// Pressure-sensor depth and sonar altitude, both in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Measurement<T> {
    pub depth: T,
    pub altitude: T,
}

impl<T: Real> Measurement<T> {
    pub fn new(depth: T, altitude: T) -> Self {
        Self { depth, altitude }
    }

    pub fn to_vector(self) -> Vector2<T> {
        Vector2::new(self.depth, self.altitude)
    }

    pub fn from_vector(v: &Vector2<T>) -> Self {
        Self::new(v[0], v[1])
    }
}

/// Per-lake constants of the height-coupled horizontal motion model:
///
/// ```text
/// px' = px + a·(L(px,py)/a_d + a_off)·dt
/// py' = py + b·(L(px,py)/b_d + b_off)·dt
/// pz' = pz + vz·dt
/// ```
///
/// A divisor of exactly zero switches the height coupling off for that axis
/// (the `L/a_d` term is dropped) instead of dividing by zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixedMotionParams<T> {
    pub a: T,
    pub a_d: T,
    pub a_off: T,
    pub b: T,
    pub b_d: T,
    pub b_off: T,
    pub vz: T,
}

impl<T: Real> MixedMotionParams<T> {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.a, self.a_d, self.a_off, self.b, self.b_d, self.b_off, self.vz,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::value("mixed motion parameters must be finite"));
        }
        Ok(())
    }

    /// Height gain `a / a_d` (0 when the coupling is off).
    pub fn x_gain(&self) -> T {
        coupling(self.a, self.a_d)
    }

    /// Height gain `b / b_d` (0 when the coupling is off).
    pub fn y_gain(&self) -> T {
        coupling(self.b, self.b_d)
    }

    /// Horizontal velocity at a point with water-column height `height`.
    pub fn horizontal_velocity(&self, height: T) -> (T, T) {
        (
            self.x_gain() * height + self.a * self.a_off,
            self.y_gain() * height + self.b * self.b_off,
        )
    }
}

fn coupling<T: Real>(gain: T, divisor: T) -> T {
    if divisor == T::zero() {
        T::zero()
    } else {
        gain / divisor
    }
}

/// Which motion model drives the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion<T> {
    /// Constant-velocity motion `x + u·dt`.
    Linear(ControlInput<T>),
    /// Height-coupled horizontal motion with linear depth motion.
    Mixed(MixedMotionParams<T>),
}

impl<T: Real> Motion<T> {
    pub fn label(&self) -> &'static str {
        match self {
            Motion::Linear(_) => "linear",
            Motion::Mixed(_) => "mixed",
        }
    }

    /// Vertical velocity.
    pub fn vz(&self) -> T {
        match self {
            Motion::Linear(u) => u.vz,
            Motion::Mixed(p) => p.vz,
        }
    }

    pub fn step(&self, s: &State<T>, grid: &BathymetryGrid<T>, dt: T) -> Result<State<T>> {
        match self {
            Motion::Linear(u) => Ok(step_linear(s, u, dt)),
            Motion::Mixed(p) => step_mixed(s, p, grid, dt),
        }
    }

    pub fn jacobian(&self, s: &State<T>, grid: &BathymetryGrid<T>, dt: T) -> Result<Matrix3<T>> {
        match self {
            Motion::Linear(_) => Ok(motion_jacobian_linear()),
            Motion::Mixed(p) => motion_jacobian_mixed(s, p, grid, dt),
        }
    }

    /// Horizontal part of the motion (`f_n` of the MPF decomposition).
    pub fn step_horizontal(&self, px: T, py: T, grid: &BathymetryGrid<T>, dt: T) -> Result<(T, T)> {
        match self {
            Motion::Linear(u) => Ok((px + u.vx * dt, py + u.vy * dt)),
            Motion::Mixed(p) => {
                let height = grid.height_at(px, py)?;
                let (vx, vy) = p.horizontal_velocity(height);
                Ok((px + vx * dt, py + vy * dt))
            }
        }
    }
}

/// Sign convention of the measurement Jacobian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JacobianMode {
    /// `H = ∂h/∂x = [[0, 0, 1], [∂L/∂x, ∂L/∂y, −1]]`.
    #[default]
    Analytic,
    /// The sign-flipped depth column `[[0, 0, −1], [∂L/∂x, ∂L/∂y, 1]]`.
    SignFlipped,
}

/// Process, measurement and initial covariances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig<T: Real> {
    pub q: Matrix3<T>,
    pub r: Matrix2<T>,
    pub p0: Matrix3<T>,
}

impl<T: Real> NoiseConfig<T> {
    /// Default tuning: `Q = 0.01·diag(vx², vy², (0.3048·vz)²)`,
    /// `R = 0.3048²·I₂`, `P0 = diag(1, 1, 0.3048²)`.
    pub fn from_velocity(vx: T, vy: T, vz: T) -> Self {
        let ft = T::lit(FEET_TO_METERS);
        let q = Matrix3::from_diagonal(&Vector3::new(vx * vx, vy * vy, (ft * vz) * (ft * vz)))
            * T::lit(0.01);
        Self {
            q,
            r: default_r(),
            p0: default_p0(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        use crate::linalg::is_psd;
        let tol = T::lit(1e-9);
        if !is_psd(&self.q, tol) {
            return Err(Error::value("Q must be symmetric positive semidefinite"));
        }
        if !is_psd(&self.p0, tol) {
            return Err(Error::value("P0 must be symmetric positive semidefinite"));
        }
        if (self.r - self.r.transpose()).amax() > tol * self.r.trace().abs().max(T::one())
            || nalgebra::Cholesky::new(self.r).is_none()
        {
            return Err(Error::value("R must be symmetric positive definite"));
        }
        Ok(())
    }
}

/// `R = diag(0.3048², 0.3048²)`.
pub fn default_r<T: Real>() -> Matrix2<T> {
    let ft = T::lit(FEET_TO_METERS);
    Matrix2::identity() * (ft * ft)
}

/// `P0 = diag(1², 1², 0.3048²)`.
pub fn default_p0<T: Real>() -> Matrix3<T> {
    let ft = T::lit(FEET_TO_METERS);
    Matrix3::from_diagonal(&Vector3::new(T::one(), T::one(), ft * ft))
}

pub fn step_linear<T: Real>(s: &State<T>, u: &ControlInput<T>, dt: T) -> State<T> {
    State::new(s.px + u.vx * dt, s.py + u.vy * dt, s.pz + u.vz * dt)
}

pub fn step_mixed<T: Real>(
    s: &State<T>,
    p: &MixedMotionParams<T>,
    grid: &BathymetryGrid<T>,
    dt: T,
) -> Result<State<T>> {
    let height = grid.height_at(s.px, s.py)?;
    let (vx, vy) = p.horizontal_velocity(height);
    Ok(State::new(s.px + vx * dt, s.py + vy * dt, s.pz + p.vz * dt))
}

pub fn motion_jacobian_linear<T: Real>() -> Matrix3<T> {
    Matrix3::identity()
}

pub fn motion_jacobian_mixed<T: Real>(
    s: &State<T>,
    p: &MixedMotionParams<T>,
    grid: &BathymetryGrid<T>,
    dt: T,
) -> Result<Matrix3<T>> {
    let (gx, gy) = grid.gradient_at(s.px, s.py)?;
    let (ka, kb) = (p.x_gain() * dt, p.y_gain() * dt);
    let one = T::one();
    let zero = T::zero();
    Ok(Matrix3::new(
        one + ka * gx,
        ka * gy,
        zero,
        kb * gx,
        one + kb * gy,
        zero,
        zero,
        zero,
        one,
    ))
}

/// Noiseless depth and altitude at `s`.
pub fn measure<T: Real>(grid: &BathymetryGrid<T>, s: &State<T>) -> Result<Measurement<T>> {
    let height = grid.height_at(s.px, s.py)?;
    Ok(Measurement::new(s.pz, height - s.pz))
}

pub fn measurement_jacobian<T: Real>(
    grid: &BathymetryGrid<T>,
    s: &State<T>,
    mode: JacobianMode,
) -> Result<Matrix2x3<T>> {
    let (gx, gy) = grid.gradient_at(s.px, s.py)?;
    let (zero, one) = (T::zero(), T::one());
    let sign = match mode {
        JacobianMode::Analytic => one,
        JacobianMode::SignFlipped => -one,
    };
    Ok(Matrix2x3::new(zero, zero, sign, gx, gy, -sign))
}

/// Everything a filter step needs besides its own belief.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a, T: Real> {
    pub grid: &'a BathymetryGrid<T>,
    pub motion: &'a Motion<T>,
    pub noise: &'a NoiseConfig<T>,
    pub dt: T,
}
