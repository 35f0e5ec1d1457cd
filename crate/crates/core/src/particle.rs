//! Depth-based bootstrap particle filter.
//!
//! Each step propagates every particle through the motion model with process
//! noise, weights it by the Gaussian likelihood of the depth/altitude
//! measurement, normalizes, resamples systematically while replacing a
//! fraction of the set with particles drawn uniformly over the map, and
//! reports the weighted mean as the pose estimate.

use nalgebra::{Matrix2, Matrix3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::BathymetryGrid;
use crate::linalg::psd_sqrt;
use crate::models::{measure, Measurement, Motion, State, StepContext};
use crate::resample::{effective_sample_size, injection_count, normalize, systematic_indices};
use crate::rng::{correlated_normal, uniform};
use crate::scalar::Real;

/// When the pose estimate is taken relative to resampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateTiming {
    /// Mean of the resampled, uniformly weighted set.
    #[default]
    PostResample,
    /// Weighted mean before resampling.
    PreResample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PfConfig {
    #[serde(default = "PfConfig::default_particles")]
    pub particles: usize,
    #[serde(default = "default_inject")]
    pub inject_fraction: f64,
    #[serde(default)]
    pub estimate: EstimateTiming,
    /// Resample only when `ESS < ess_threshold · N`. `None` resamples every
    /// step.
    #[serde(default)]
    pub ess_threshold: Option<f64>,
}

pub(crate) fn default_inject() -> f64 {
    0.05
}

impl PfConfig {
    fn default_particles() -> usize {
        5000
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::config("particle count must be at least 1"));
        }
        validate_common(self.inject_fraction, self.ess_threshold)
    }
}

pub(crate) fn validate_common(inject_fraction: f64, ess_threshold: Option<f64>) -> Result<()> {
    if !(0.0..=1.0).contains(&inject_fraction) {
        return Err(Error::config("inject_fraction must lie in [0, 1]"));
    }
    if let Some(t) = ess_threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::config("ess_threshold must lie in [0, 1]"));
        }
    }
    Ok(())
}

impl Default for PfConfig {
    fn default() -> Self {
        Self {
            particles: Self::default_particles(),
            inject_fraction: default_inject(),
            estimate: EstimateTiming::PostResample,
            ess_threshold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet<T> {
    pub positions: Vec<State<T>>,
    pub weights: Vec<T>,
    /// Particles whose last motion update left the map.
    pub out_of_bounds: Vec<bool>,
    /// Set when the last normalization found (numerically) zero total weight.
    pub degenerate: bool,
}

/// Per-step diagnostics reported alongside the estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport<T> {
    pub estimate: State<T>,
    /// Effective sample size after weighting, before resampling.
    pub ess: T,
    pub degenerate: bool,
    pub resampled: bool,
}

impl<T: Real> ParticleSet<T> {
    /// Samples `n` particles from `N(init_pose, p0)`, redrawing samples that
    /// fall off the map; weights are uniform.
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
        let root = psd_sqrt(p0);
        let mean = init_pose.to_vector();
        let budget = 100 * n;
        let mut draws = 0;
        let mut positions = Vec::with_capacity(n);
        while positions.len() < n {
            if draws >= budget {
                return Err(Error::numeric(format!(
                    "drew {budget} samples but only {} landed on the map",
                    positions.len()
                )));
            }
            draws += 1;
            let p = State::from_vector(&(mean + correlated_normal(rng, &root)));
            if grid.in_bounds(p.px, p.py) {
                positions.push(p);
            }
        }
        Ok(Self::uniform(positions))
    }

    pub fn uniform(positions: Vec<State<T>>) -> Self {
        let n = positions.len();
        let w = T::one() / T::from_usize_lossy(n.max(1));
        Self {
            positions,
            weights: vec![w; n],
            out_of_bounds: vec![false; n],
            degenerate: false,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Propagates every particle through `motion` and adds `N(0, q)` noise.
    /// Particles the motion model cannot evaluate stay in place and, like
    /// particles pushed off the map by noise, are flagged.
    pub fn motion_update<R: Rng + ?Sized>(
        &mut self,
        motion: &Motion<T>,
        q: &Matrix3<T>,
        grid: &BathymetryGrid<T>,
        dt: T,
        rng: &mut R,
    ) {
        let root = psd_sqrt(q);
        for (p, flag) in self.positions.iter_mut().zip(self.out_of_bounds.iter_mut()) {
            let noise = correlated_normal(rng, &root);
            match motion.step(p, grid, dt) {
                Ok(next) => {
                    *p = State::from_vector(&(next.to_vector() + noise));
                    *flag = !grid.in_bounds(p.px, p.py);
                }
                Err(_) => *flag = true,
            }
        }
    }

    /// Multiplies each weight by `exp(−½ νᵀ R⁻¹ ν)` with `ν = z − h(x)`.
    /// Off-map particles get weight zero. Weights are left unnormalized.
    pub fn sensor_update(
        &mut self,
        z: &Measurement<T>,
        grid: &BathymetryGrid<T>,
        r: &Matrix2<T>,
    ) -> Result<()> {
        let r_inv = r
            .try_inverse()
            .ok_or_else(|| Error::numeric("measurement covariance is singular"))?;
        let half = T::lit(0.5);
        let zv = z.to_vector();
        for (p, w) in self.positions.iter().zip(self.weights.iter_mut()) {
            match measure(grid, p) {
                Ok(h) => {
                    let nu = zv - h.to_vector();
                    *w *= (-(nu.transpose() * r_inv * nu)[(0, 0)] * half).exp();
                }
                Err(_) => *w = T::zero(),
            }
        }
        Ok(())
    }

    /// Normalizes weights; a degenerate set is reset to uniform and flagged.
    pub fn normalize(&mut self) {
        self.degenerate = normalize(&mut self.weights);
    }

    /// Systematic resampling of `⌈(1 − inject_fraction)·N⌉` particles; the
    /// rest are drawn uniformly over the map with depth uniform in the local
    /// water column. All weights are reset to `1/N`.
    pub fn resample<R: Rng + ?Sized>(
        &mut self,
        grid: &BathymetryGrid<T>,
        rng: &mut R,
        inject_fraction: f64,
    ) {
        let n = self.len();
        let injected = injection_count(n, inject_fraction);
        let ancestors = systematic_indices(&self.weights, n - injected, rng);
        let mut next: Vec<State<T>> = ancestors.iter().map(|&i| self.positions[i]).collect();
        for _ in 0..injected {
            let fallback = next.last().copied().unwrap_or(self.positions[0]);
            next.push(random_map_state(grid, rng).unwrap_or(fallback));
        }
        *self = Self::uniform(next);
    }

    /// Weighted mean position.
    pub fn estimate(&self) -> State<T> {
        let mean = self
            .positions
            .iter()
            .zip(&self.weights)
            .fold(nalgebra::Vector3::zeros(), |acc, (p, &w)| {
                acc + p.to_vector() * w
            });
        State::from_vector(&mean)
    }

    pub fn ess(&self) -> T {
        effective_sample_size(&self.weights)
    }

    /// One filter iteration. `motion` is `None` on the first step, where only
    /// the measurement is incorporated.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        ctx: &StepContext<'_, T>,
        predict: bool,
        z: &Measurement<T>,
        cfg: &PfConfig,
        rng: &mut R,
    ) -> Result<StepReport<T>> {
        if predict {
            self.motion_update(ctx.motion, &ctx.noise.q, ctx.grid, ctx.dt, rng);
        }
        self.sensor_update(z, ctx.grid, &ctx.noise.r)?;
        self.normalize();
        let degenerate = self.degenerate;
        let ess = self.ess();
        let pre = self.estimate();
        let resampled = match cfg.ess_threshold {
            Some(t) => ess < T::lit(t) * T::from_usize_lossy(self.len()),
            None => true,
        };
        if resampled {
            self.resample(ctx.grid, rng, cfg.inject_fraction);
        }
        let estimate = match cfg.estimate {
            EstimateTiming::PostResample => self.estimate(),
            EstimateTiming::PreResample => pre,
        };
        Ok(StepReport {
            estimate,
            ess,
            degenerate,
            resampled,
        })
    }
}

/// A horizontal position drawn uniformly over the interpolable part of the
/// map, or `None` if 1000 draws all hit land.
pub(crate) fn random_map_position<T: Real, R: Rng + ?Sized>(
    grid: &BathymetryGrid<T>,
    rng: &mut R,
) -> Option<(T, T, T)> {
    let (x0, x1, y0, y1) = grid.interpolable_extent();
    for _ in 0..1000 {
        let x = uniform(rng, x0, x1);
        let y = uniform(rng, y0, y1);
        if let Ok(h) = grid.height_at(x, y) {
            return Some((x, y, h));
        }
    }
    None
}

fn random_map_state<T: Real, R: Rng + ?Sized>(
    grid: &BathymetryGrid<T>,
    rng: &mut R,
) -> Option<State<T>> {
    let (x, y, h) = random_map_position(grid, rng)?;
    Some(State::new(x, y, uniform(rng, T::zero(), h)))
}
