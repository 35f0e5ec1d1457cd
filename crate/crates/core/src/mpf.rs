//! Marginalized (Rao-Blackwellized) particle filter.
//!
//! The state is split into a nonlinear part `xⁿ = (px, py)`, represented by
//! samples, and a linear part `xˡ = pz`, tracked by one scalar Kalman filter
//! per sample. Horizontal dynamics do not depend on depth and depth is a
//! single integrator, so the model reads
//!
//! ```text
//! xⁿ' = fₙ(xⁿ) + wⁿ            wⁿ ~ N(0, Qₙ)
//! xˡ' = xˡ + f_l + wˡ          wˡ ~ N(0, Q_l),   f_l = vz·dt
//! y   = hₙ(xⁿ) + C·xˡ + e      hₙ = (0, L(px, py)),   C = (1, −1)ᵀ
//! ```
//!
//! [`reference`] holds the general mixed linear/nonlinear recursions, used to
//! cross-check this specialization.

use nalgebra::{Matrix2, Matrix3, RowVector2, Vector2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::BathymetryGrid;
use crate::linalg::psd_sqrt;
use crate::models::{Measurement, Motion, NoiseConfig, State};
use crate::particle::{default_inject, random_map_position, validate_common, EstimateTiming};
use crate::resample::{effective_sample_size, injection_count, normalize, systematic_indices};
use crate::rng::correlated_normal;
use crate::scalar::Real;

pub mod reference;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpfConfig {
    #[serde(default = "MpfConfig::default_particles")]
    pub particles: usize,
    #[serde(default = "default_inject")]
    pub inject_fraction: f64,
    #[serde(default = "MpfConfig::default_estimate")]
    pub estimate: EstimateTiming,
    #[serde(default)]
    pub ess_threshold: Option<f64>,
}

impl MpfConfig {
    fn default_particles() -> usize {
        300
    }

    fn default_estimate() -> EstimateTiming {
        EstimateTiming::PreResample
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::config("particle count must be at least 1"));
        }
        validate_common(self.inject_fraction, self.ess_threshold)
    }
}

impl Default for MpfConfig {
    fn default() -> Self {
        Self {
            particles: Self::default_particles(),
            inject_fraction: default_inject(),
            estimate: Self::default_estimate(),
            ess_threshold: None,
        }
    }
}

/// The split model for one step length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpfModel<T: Real> {
    pub motion: Motion<T>,
    pub q_n: Matrix2<T>,
    pub q_l: T,
    pub r: Matrix2<T>,
    pub dt: T,
}

impl<T: Real> MpfModel<T> {
    /// Splits `noise.q` into its horizontal and vertical blocks. Fails if the
    /// two are correlated.
    pub fn new(motion: Motion<T>, noise: &NoiseConfig<T>, dt: T) -> Result<Self> {
        let q = &noise.q;
        if q[(0, 2)] != T::zero()
            || q[(1, 2)] != T::zero()
            || q[(2, 0)] != T::zero()
            || q[(2, 1)] != T::zero()
        {
            return Err(Error::config(
                "the marginalized filter needs Q without horizontal/depth cross terms",
            ));
        }
        Ok(Self {
            motion,
            q_n: q.fixed_view::<2, 2>(0, 0).into_owned(),
            q_l: q[(2, 2)],
            r: noise.r,
            dt,
        })
    }

    pub fn f_n(&self, grid: &BathymetryGrid<T>, xn: &Vector2<T>) -> Result<Vector2<T>> {
        let (x, y) = self.motion.step_horizontal(xn.x, xn.y, grid, self.dt)?;
        Ok(Vector2::new(x, y))
    }

    pub fn f_l(&self) -> T {
        self.motion.vz() * self.dt
    }

    pub fn c() -> Vector2<T> {
        Vector2::new(T::one(), -T::one())
    }

    pub fn h_n(grid: &BathymetryGrid<T>, xn: &Vector2<T>) -> Result<Vector2<T>> {
        Ok(Vector2::new(T::zero(), grid.height_at(xn.x, xn.y)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpfParticleSet<T> {
    /// Horizontal samples `(px, py)`.
    pub nonlinear: Vec<Vector2<T>>,
    /// Per-sample depth mean.
    pub linear_means: Vec<T>,
    /// Per-sample depth variance.
    pub linear_vars: Vec<T>,
    pub weights: Vec<T>,
    pub out_of_bounds: Vec<bool>,
    pub degenerate: bool,
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpfStepReport<T> {
    pub estimate: State<T>,
    pub ess: T,
    pub degenerate: bool,
    pub resampled: bool,
}

impl<T: Real> MpfParticleSet<T> {
    /// Samples `(px, py)` from the horizontal block of `p0` around
    /// `init_pose`, redrawing off-map samples. Every depth filter starts at
    /// `(init_pose.pz, p0[2,2])`.
    pub fn init<R: Rng + ?Sized>(
        grid: &BathymetryGrid<T>,
        n: usize,
        init_pose: &State<T>,
        p0: &Matrix3<T>,
        rng: &mut R,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("particle count must be at least 1"));
        }
        if !grid.in_bounds(init_pose.px, init_pose.py) {
            return Err(Error::OutOfBounds {
                x: init_pose.px.as_f64(),
                y: init_pose.py.as_f64(),
            });
        }
        let root = psd_sqrt(&p0.fixed_view::<2, 2>(0, 0).into_owned());
        let mean = Vector2::new(init_pose.px, init_pose.py);
        let budget = 100 * n;
        let mut draws = 0;
        let mut nonlinear = Vec::with_capacity(n);
        while nonlinear.len() < n {
            if draws >= budget {
                return Err(Error::numeric(format!(
                    "drew {budget} samples but only {} landed on the map",
                    nonlinear.len()
                )));
            }
            draws += 1;
            let s = mean + correlated_normal(rng, &root);
            if grid.in_bounds(s.x, s.y) {
                nonlinear.push(s);
            }
        }
        Ok(Self::uniform(
            nonlinear,
            vec![init_pose.pz; n],
            vec![p0[(2, 2)]; n],
        ))
    }

    pub fn uniform(nonlinear: Vec<Vector2<T>>, linear_means: Vec<T>, linear_vars: Vec<T>) -> Self {
        let n = nonlinear.len();
        let w = T::one() / T::from_usize_lossy(n.max(1));
        Self {
            nonlinear,
            linear_means,
            linear_vars,
            weights: vec![w; n],
            out_of_bounds: vec![false; n],
            degenerate: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nonlinear.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nonlinear.is_empty()
    }

    /// Weights each sample by the marginal likelihood
    /// `N(z; hₙ + C·m, C·P·Cᵀ + R)`, runs the per-sample depth Kalman update
    /// and normalizes. Off-map samples get weight zero.
    pub fn measurement_update(
        &mut self,
        z: &Measurement<T>,
        grid: &BathymetryGrid<T>,
        model: &MpfModel<T>,
    ) -> Result<()> {
        let c = MpfModel::c();
        let cct = c * c.transpose();
        let zv = z.to_vector();
        let two_pi = T::two_pi();
        let half = T::lit(0.5);
        for i in 0..self.len() {
            let h = match MpfModel::h_n(grid, &self.nonlinear[i]) {
                Ok(h) => h,
                Err(_) => {
                    self.weights[i] = T::zero();
                    continue;
                }
            };
            let (m, p) = (self.linear_means[i], self.linear_vars[i]);
            let s = cct * p + model.r;
            let det = s.determinant();
            let s_inv = s
                .try_inverse()
                .filter(|_| det > T::zero())
                .ok_or_else(|| Error::numeric("innovation covariance is singular"))?;
            let nu = zv - (h + c * m);
            let mahalanobis = (nu.transpose() * s_inv * nu)[(0, 0)];
            self.weights[i] *= (-half * mahalanobis).exp() / (two_pi * det.sqrt());
            let gain: RowVector2<T> = c.transpose() * s_inv * p;
            self.linear_means[i] = m + (gain * nu)[(0, 0)];
            let shrink = (gain * s * gain.transpose())[(0, 0)];
            self.linear_vars[i] = (p - shrink).max(T::zero());
        }
        self.degenerate = normalize(&mut self.weights);
        Ok(())
    }

    /// Systematic resampling over whole tuples; the depth filter travels with
    /// its sample. Injected samples start a fresh depth filter at
    /// `(prior_mean, prior_var)`.
    pub fn resample<R: Rng + ?Sized>(
        &mut self,
        grid: &BathymetryGrid<T>,
        rng: &mut R,
        inject_fraction: f64,
        prior_mean: T,
        prior_var: T,
    ) {
        let n = self.len();
        let injected = injection_count(n, inject_fraction);
        let ancestors = systematic_indices(&self.weights, n - injected, rng);
        let mut nonlinear: Vec<_> = ancestors.iter().map(|&i| self.nonlinear[i]).collect();
        let mut means: Vec<_> = ancestors.iter().map(|&i| self.linear_means[i]).collect();
        let mut vars: Vec<_> = ancestors.iter().map(|&i| self.linear_vars[i]).collect();
        for _ in 0..injected {
            let fallback = nonlinear.last().copied().unwrap_or(self.nonlinear[0]);
            let xn =
                random_map_position(grid, rng).map_or(fallback, |(x, y, _)| Vector2::new(x, y));
            nonlinear.push(xn);
            means.push(prior_mean);
            vars.push(prior_var);
        }
        *self = Self::uniform(nonlinear, means, vars);
    }

    /// Samples `xⁿ' = fₙ(xⁿ) + N(0, Qₙ)` and runs the depth Kalman
    /// prediction `m' = m + f_l`, `P' = P + Q_l`. Samples off the map stay in
    /// place and are flagged.
    pub fn predict<R: Rng + ?Sized>(
        &mut self,
        model: &MpfModel<T>,
        grid: &BathymetryGrid<T>,
        rng: &mut R,
    ) {
        let root = psd_sqrt(&model.q_n);
        let f_l = model.f_l();
        for i in 0..self.len() {
            let noise = correlated_normal(rng, &root);
            match model.f_n(grid, &self.nonlinear[i]) {
                Ok(next) => {
                    let xn = next + noise;
                    self.out_of_bounds[i] = !grid.in_bounds(xn.x, xn.y);
                    self.nonlinear[i] = xn;
                }
                Err(_) => self.out_of_bounds[i] = true,
            }
            self.linear_means[i] += f_l;
            self.linear_vars[i] += model.q_l;
        }
    }

    /// Weighted means of the horizontal samples and of the depth means.
    pub fn estimate(&self) -> State<T> {
        let mut acc = (T::zero(), T::zero(), T::zero());
        for i in 0..self.len() {
            let w = self.weights[i];
            acc.0 += w * self.nonlinear[i].x;
            acc.1 += w * self.nonlinear[i].y;
            acc.2 += w * self.linear_means[i];
        }
        State::new(acc.0, acc.1, acc.2)
    }

    pub fn ess(&self) -> T {
        effective_sample_size(&self.weights)
    }

    /// One iteration: prediction (unless first step), measurement update,
    /// estimate, then resampling with injection. Injected samples inherit the
    /// filter's current depth estimate with variance `prior_var`.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        model: &MpfModel<T>,
        grid: &BathymetryGrid<T>,
        predict: bool,
        z: &Measurement<T>,
        cfg: &MpfConfig,
        prior_var: T,
        rng: &mut R,
    ) -> Result<MpfStepReport<T>> {
        if predict {
            self.predict(model, grid, rng);
        }
        self.measurement_update(z, grid, model)?;
        let degenerate = self.degenerate;
        let ess = self.ess();
        let pre = self.estimate();
        let resampled = match cfg.ess_threshold {
            Some(t) => ess < T::lit(t) * T::from_usize_lossy(self.len()),
            None => true,
        };
        if resampled {
            self.resample(grid, rng, cfg.inject_fraction, pre.pz, prior_var);
        }
        let estimate = match cfg.estimate {
            EstimateTiming::PreResample => pre,
            EstimateTiming::PostResample => self.estimate(),
        };
        Ok(MpfStepReport {
            estimate,
            ess,
            degenerate,
            resampled,
        })
    }
}
