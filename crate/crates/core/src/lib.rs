//! Bathymetry-aided localization for autonomous underwater vehicles.
//!
//! The crate estimates the `(x, y, z)` position of a vehicle carrying a depth
//! sensor and a single-beam altimeter by fusing those two readings with a
//! gridded bathymetry map. Four Bayes filters are provided:
//!
//! * [`gaussian`]: extended and unscented Kalman filters,
//! * [`particle`]: a bootstrap particle filter with random particle injection,
//! * [`mpf`]: a marginalized (Rao-Blackwellized) particle filter that samples
//!   the horizontal position and tracks depth with per-particle Kalman filters.
//!
//! [`sim`] simulates ground truth, runs the filters and aggregates RMSE and
//! runtime over Monte Carlo replicates.
//!
//! All numeric code is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`, which is what the harness uses.

pub mod error;
pub mod gaussian;
pub mod grid;
pub mod linalg;
pub mod models;
pub mod mpf;
pub mod particle;
pub mod resample;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod synthetic;

pub use error::{Error, Result};
pub use gaussian::{GaussianBelief, GaussianFilterError, UkfParams};
pub use grid::BathymetryGrid;
pub use models::{
    ControlInput, JacobianMode, Measurement, MixedMotionParams, Motion, NoiseConfig, State,
};
pub use mpf::{MpfConfig, MpfModel, MpfParticleSet};
pub use particle::{EstimateTiming, ParticleSet, PfConfig};
pub use scalar::Real;
pub use sim::{
    AggregateReport, BenchmarkConfig, FilterKind, FilterSettings, FilterSummary, LakeSource,
    NoiseSpec, RunRecord, RunReport, Stats, TruthRun,
};
pub use synthetic::{LakeProfile, SyntheticLakeSpec};

/// Bathymetry grid over `f64`.
pub type Grid = BathymetryGrid<f64>;
/// Bathymetry grid over `f32`.
pub type Grid32 = BathymetryGrid<f32>;
/// Vehicle position over `f64`.
pub type State64 = State<f64>;
/// Gaussian belief over `f64`.
pub type Belief = GaussianBelief<f64>;
/// Particle set over `f64`.
pub type Particles = ParticleSet<f64>;
/// Marginalized particle set over `f64`.
pub type MpfParticles = MpfParticleSet<f64>;
/// Motion model over `f64`.
pub type Motion64 = Motion<f64>;
/// Noise covariances over `f64`.
pub type Noise = NoiseConfig<f64>;
