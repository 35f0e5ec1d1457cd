//! Ground-truth simulation, single filter runs and Monte Carlo aggregation.
//!
//! A replicate simulates one truth trajectory and runs every requested
//! filter on it, so filters are compared on identical measurement noise.
//! Each replicate and filter draws from its own seeded stream, which makes
//! results independent of scheduling and worker count.

use std::time::{Duration, Instant};

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{ekf_correct, ekf_predict, ukf_correct, ukf_predict};
use crate::gaussian::{GaussianBelief, GaussianFilterError, UkfParams};
use crate::grid::BathymetryGrid;
use crate::linalg::psd_sqrt;
use crate::models::StepContext;
use crate::models::{measure, ControlInput, JacobianMode, Measurement, Motion, NoiseConfig, State};
use crate::mpf::{MpfConfig, MpfModel, MpfParticleSet};
use crate::particle::{ParticleSet, PfConfig};
use crate::rng::{correlated_normal, derive_seed, seeded};
use crate::scalar::Real;
use crate::synthetic::SyntheticLakeSpec;

/// Version tag written into every JSON report.
pub const REPORT_VERSION: u32 = 1;

/// Seed stream of the ground-truth simulation.
pub const TRUTH_STREAM: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FilterKind {
    #[serde(rename = "EKF")]
    Ekf,
    #[serde(rename = "UKF")]
    Ukf,
    #[serde(rename = "PF")]
    Pf,
    #[serde(rename = "MPF")]
    Mpf,
}

impl FilterKind {
    pub const ALL: [FilterKind; 4] = [
        FilterKind::Ekf,
        FilterKind::Ukf,
        FilterKind::Pf,
        FilterKind::Mpf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Ekf => "EKF",
            FilterKind::Ukf => "UKF",
            FilterKind::Pf => "PF",
            FilterKind::Mpf => "MPF",
        }
    }

    /// Seed stream of this filter within a replicate.
    pub fn stream(self) -> u64 {
        match self {
            FilterKind::Ekf => 1,
            FilterKind::Ukf => 2,
            FilterKind::Pf => 3,
            FilterKind::Mpf => 4,
        }
    }

    pub fn is_particle(self) -> bool {
        matches!(self, FilterKind::Pf | FilterKind::Mpf)
    }
}

impl std::fmt::Display for FilterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FilterKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown filter `{s}`")))
    }
}

/// Everything a run needs besides the model: per-filter tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSettings {
    #[serde(default)]
    pub pf: PfConfig,
    #[serde(default)]
    pub mpf: MpfConfig,
    #[serde(default)]
    pub ukf: UkfParams,
    #[serde(default)]
    pub jacobian: JacobianMode,
    /// Horizontal error at the final step beyond which a run counts as
    /// having lost track.
    #[serde(default = "default_divergence_radius")]
    pub divergence_radius: f64,
}

fn default_divergence_radius() -> f64 {
    10.0
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self {
            pf: PfConfig::default(),
            mpf: MpfConfig::default(),
            ukf: UkfParams::default(),
            jacobian: JacobianMode::default(),
            divergence_radius: default_divergence_radius(),
        }
    }
}

impl FilterSettings {
    pub fn validate(&self) -> Result<()> {
        self.pf.validate()?;
        self.mpf.validate()?;
        self.ukf.validate()?;
        if !(self.divergence_radius > 0.0) {
            return Err(Error::config("divergence_radius must be positive"));
        }
        Ok(())
    }
}

/// Simulated trajectory, noisy measurements and the velocity applied at each
/// step (zero at `t = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRun<T> {
    pub states: Vec<State<T>>,
    pub measurements: Vec<Measurement<T>>,
    pub controls: Vec<ControlInput<T>>,
    pub dt: T,
    pub seed: u64,
    /// The trajectory left the map before the requested number of steps.
    pub truncated: bool,
    /// Steps whose depth had to be clamped to the water column.
    pub clamped_steps: usize,
}

impl<T> TruthRun<T> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Simulates `x_t = f(x_{t−1}) + q_t`, `y_t = h(x_t) + r_t` for `steps`
/// steps starting at `init_pose`. Depth is clamped to the water column.
/// Without `process_noise` the trajectory follows the motion model exactly.
#[allow(clippy::too_many_arguments)]
pub fn simulate_truth<T: Real>(
    grid: &BathymetryGrid<T>,
    motion: &Motion<T>,
    steps: usize,
    noise: &NoiseConfig<T>,
    dt: T,
    seed: u64,
    init_pose: &State<T>,
    process_noise: bool,
) -> Result<TruthRun<T>> {
    if steps == 0 {
        return Err(Error::config("steps must be at least 1"));
    }
    let height = grid.height_at(init_pose.px, init_pose.py)?;
    let mut rng = seeded(seed);
    let q_root = psd_sqrt(&noise.q);
    let r_root = psd_sqrt(&noise.r);
    let mut state = State::new(init_pose.px, init_pose.py, clamp(init_pose.pz, height));
    let mut run = TruthRun {
        states: Vec::with_capacity(steps),
        measurements: Vec::with_capacity(steps),
        controls: Vec::with_capacity(steps),
        dt,
        seed,
        truncated: false,
        clamped_steps: (state.pz != init_pose.pz) as usize,
    };
    let observe = |s: &State<T>, rng: &mut _| -> Result<Measurement<T>> {
        let clean = measure(grid, s)?.to_vector();
        Ok(Measurement::from_vector(
            &(clean + correlated_normal::<T, _, 2>(rng, &r_root)),
        ))
    };
    run.states.push(state);
    run.measurements.push(observe(&state, &mut rng)?);
    run.controls
        .push(ControlInput::new(T::zero(), T::zero(), T::zero()));
    for _ in 1..steps {
        let Ok(next) = motion.step(&state, grid, dt) else {
            run.truncated = true;
            break;
        };
        let control = ControlInput::from_displacement(&state, &next, dt);
        let mut v = next.to_vector();
        if process_noise {
            v += correlated_normal::<T, _, 3>(&mut rng, &q_root);
        }
        let Ok(h) = grid.height_at(v.x, v.y) else {
            run.truncated = true;
            break;
        };
        state = State::new(v.x, v.y, clamp(v.z, h));
        run.clamped_steps += (state.pz != v.z) as usize;
        run.states.push(state);
        run.measurements.push(observe(&state, &mut rng)?);
        run.controls.push(control);
    }
    Ok(run)
}

fn clamp<T: Real>(pz: T, height: T) -> T {
    pz.max(T::zero()).min(height.max(T::zero()))
}

impl<T: Real> ControlInput<T> {
    fn from_displacement(from: &State<T>, to: &State<T>, dt: T) -> Self {
        Self::new(
            (to.px - from.px) / dt,
            (to.py - from.py) / dt,
            (to.pz - from.pz) / dt,
        )
    }
}

/// Per-axis root-mean-square error `sqrt(Σ(p_g − p_e)² / T)`.
pub fn rmse<T: Real>(truth: &[State<T>], est: &[State<T>]) -> Result<(T, T, T)> {
    if truth.len() != est.len() {
        return Err(Error::DimensionMismatch {
            context: "rmse".into(),
            expected: truth.len(),
            found: est.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::value("rmse needs at least one step"));
    }
    let mut sum = Vector3::<T>::zeros();
    for (g, e) in truth.iter().zip(est) {
        let d = g.to_vector() - e.to_vector();
        sum += d.component_mul(&d);
    }
    let n = T::from_usize_lossy(truth.len());
    Ok(((sum.x / n).sqrt(), (sum.y / n).sqrt(), (sum.z / n).sqrt()))
}

/// Outcome of one filter on one truth run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub filter: FilterKind,
    pub replicate: u64,
    pub seed: u64,
    pub steps: usize,
    pub rmse_x: f64,
    pub rmse_y: f64,
    pub rmse_z: f64,
    /// The filter failed or lost track.
    pub diverged: bool,
    /// First step at which the filter failed, if it did.
    pub failed_at: Option<usize>,
    /// Horizontal error at the last step.
    pub final_horizontal_error: f64,
    /// Steps whose weights collapsed and were reset to uniform.
    pub degenerate_steps: usize,
    pub truth_truncated: bool,
    pub truth_clamped_steps: usize,
    pub estimates: Vec<State<f64>>,
    /// Effective sample size per step (particle filters only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ess: Vec<f64>,
    /// Wall-clock time of the filter loop. Not serialized so that reports
    /// stay reproducible.
    #[serde(skip)]
    pub runtime: Duration,
}

impl RunReport {
    pub fn rmse_horizontal(&self) -> f64 {
        self.rmse_x.hypot(self.rmse_y)
    }

    pub fn record(&self) -> RunRecord {
        RunRecord {
            filter: self.filter,
            replicate: self.replicate,
            seed: self.seed,
            steps: self.steps,
            rmse_x: self.rmse_x,
            rmse_y: self.rmse_y,
            rmse_z: self.rmse_z,
            diverged: self.diverged,
            degenerate_steps: self.degenerate_steps,
            truth_truncated: self.truth_truncated,
            truth_clamped_steps: self.truth_clamped_steps,
            runtime_s: self.runtime.as_secs_f64(),
        }
    }
}

/// Flat per-run row of a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub filter: FilterKind,
    pub replicate: u64,
    pub seed: u64,
    pub steps: usize,
    pub rmse_x: f64,
    pub rmse_y: f64,
    pub rmse_z: f64,
    pub diverged: bool,
    pub degenerate_steps: usize,
    pub truth_truncated: bool,
    pub truth_clamped_steps: usize,
    #[serde(skip)]
    pub runtime_s: f64,
}

struct Trace<T> {
    estimates: Vec<State<T>>,
    ess: Vec<T>,
    failed_at: Option<usize>,
    degenerate_steps: usize,
}

impl<T: Real> Trace<T> {
    fn new(steps: usize) -> Self {
        Self {
            estimates: Vec::with_capacity(steps),
            ess: Vec::new(),
            failed_at: None,
            degenerate_steps: 0,
        }
    }

    /// Marks failure at the current step and repeats the last estimate (or
    /// `fallback`) for the remaining steps.
    fn fail(&mut self, steps: usize, fallback: State<T>) {
        self.failed_at = Some(self.estimates.len());
        let last = self.estimates.last().copied().unwrap_or(fallback);
        self.estimates.resize(steps, last);
    }
}

/// Runs one filter over `truth`, starting from the true initial pose with
/// covariance `noise.p0`. Filter failures are reported as divergence; only
/// invalid configuration is an error.
#[allow(clippy::too_many_arguments)]
pub fn run_filter<T: Real>(
    kind: FilterKind,
    settings: &FilterSettings,
    truth: &TruthRun<T>,
    grid: &BathymetryGrid<T>,
    motion: &Motion<T>,
    noise: &NoiseConfig<T>,
    replicate: u64,
    seed: u64,
) -> Result<RunReport> {
    settings.validate()?;
    if truth.is_empty() {
        return Err(Error::value("truth run is empty"));
    }
    let ctx = StepContext {
        grid,
        motion,
        noise,
        dt: truth.dt,
    };
    let mut rng = seeded(seed);
    let start = truth.states[0];
    let mut runtime = Duration::ZERO;
    let trace = match kind {
        FilterKind::Ekf | FilterKind::Ukf => {
            let t0 = Instant::now();
            let trace = run_gaussian(kind, settings, truth, &ctx);
            runtime = t0.elapsed();
            trace
        }
        FilterKind::Pf => {
            let cfg = &settings.pf;
            match ParticleSet::init(grid, cfg.particles, &start, &noise.p0, &mut rng) {
                Ok(mut set) => {
                    let t0 = Instant::now();
                    let mut trace = Trace::new(truth.len());
                    for (t, z) in truth.measurements.iter().enumerate() {
                        match set.step(&ctx, t > 0, z, cfg, &mut rng) {
                            Ok(rep) => {
                                trace.estimates.push(rep.estimate);
                                trace.ess.push(rep.ess);
                                trace.degenerate_steps += rep.degenerate as usize;
                            }
                            Err(_) => {
                                trace.fail(truth.len(), start);
                                break;
                            }
                        }
                    }
                    runtime = t0.elapsed();
                    trace
                }
                Err(e) if e.is_bounds() || matches!(e, Error::Numeric(_)) => {
                    let mut trace = Trace::new(truth.len());
                    trace.fail(truth.len(), start);
                    trace
                }
                Err(e) => return Err(e),
            }
        }
        FilterKind::Mpf => {
            let cfg = &settings.mpf;
            let model = MpfModel::new(*motion, noise, truth.dt)?;
            match MpfParticleSet::init(grid, cfg.particles, &start, &noise.p0, &mut rng) {
                Ok(mut set) => {
                    let t0 = Instant::now();
                    let mut trace = Trace::new(truth.len());
                    let prior_var = noise.p0[(2, 2)];
                    for (t, z) in truth.measurements.iter().enumerate() {
                        match set.step(&model, grid, t > 0, z, cfg, prior_var, &mut rng) {
                            Ok(rep) => {
                                trace.estimates.push(rep.estimate);
                                trace.ess.push(rep.ess);
                                trace.degenerate_steps += rep.degenerate as usize;
                            }
                            Err(_) => {
                                trace.fail(truth.len(), start);
                                break;
                            }
                        }
                    }
                    runtime = t0.elapsed();
                    trace
                }
                Err(e) if e.is_bounds() || matches!(e, Error::Numeric(_)) => {
                    let mut trace = Trace::new(truth.len());
                    trace.fail(truth.len(), start);
                    trace
                }
                Err(e) => return Err(e),
            }
        }
    };
    Ok(report(
        kind, settings, truth, trace, replicate, seed, runtime,
    ))
}

fn run_gaussian<T: Real>(
    kind: FilterKind,
    settings: &FilterSettings,
    truth: &TruthRun<T>,
    ctx: &StepContext<'_, T>,
) -> Trace<T> {
    let mut trace = Trace::new(truth.len());
    let mut belief = GaussianBelief::new(truth.states[0], ctx.noise.p0);
    for (t, z) in truth.measurements.iter().enumerate() {
        let step = |b: &GaussianBelief<T>| -> Result<GaussianBelief<T>, GaussianFilterError<T>> {
            match kind {
                FilterKind::Ekf => {
                    let prior = if t > 0 {
                        ekf_predict(b, ctx.motion, &ctx.noise.q, ctx.grid, ctx.dt)?
                    } else {
                        *b
                    };
                    ekf_correct(&prior, z, ctx.grid, &ctx.noise.r, settings.jacobian)
                }
                _ => {
                    let prior = if t > 0 {
                        ukf_predict(b, ctx.motion, &ctx.noise.q, ctx.grid, ctx.dt, &settings.ukf)?
                    } else {
                        *b
                    };
                    ukf_correct(&prior, z, ctx.grid, &ctx.noise.r, &settings.ukf)
                }
            }
        };
        match step(&belief) {
            Ok(next) if next.mean.is_finite() => {
                belief = next;
                trace.estimates.push(belief.mean);
            }
            _ => {
                trace.fail(truth.len(), belief.mean);
                break;
            }
        }
    }
    trace
}

fn report<T: Real>(
    kind: FilterKind,
    settings: &FilterSettings,
    truth: &TruthRun<T>,
    trace: Trace<T>,
    replicate: u64,
    seed: u64,
    runtime: Duration,
) -> RunReport {
    let scored = trace.failed_at.unwrap_or(truth.len()).max(1);
    let (rx, ry, rz) = rmse(&truth.states[..scored], &trace.estimates[..scored])
        .expect("trace and truth have equal non-zero length");
    let last = truth.len() - 1;
    let final_err = (truth.states[last].px - trace.estimates[last].px)
        .hypot(truth.states[last].py - trace.estimates[last].py)
        .as_f64();
    let lost = !(final_err <= settings.divergence_radius);
    RunReport {
        filter: kind,
        replicate,
        seed,
        steps: truth.len(),
        rmse_x: rx.as_f64(),
        rmse_y: ry.as_f64(),
        rmse_z: rz.as_f64(),
        diverged: trace.failed_at.is_some() || lost,
        failed_at: trace.failed_at,
        final_horizontal_error: final_err,
        degenerate_steps: trace.degenerate_steps,
        truth_truncated: truth.truncated,
        truth_clamped_steps: truth.clamped_steps,
        estimates: trace
            .estimates
            .iter()
            .map(|s| State::new(s.px.as_f64(), s.py.as_f64(), s.pz.as_f64()))
            .collect(),
        ess: trace.ess.iter().map(|e| e.as_f64()).collect(),
        runtime,
    }
}

/// Where a benchmark's bathymetry comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LakeSource {
    /// ESRI ASCII grid file, relative to the configuration file.
    File(String),
    Synthetic(SyntheticLakeSpec),
}

impl LakeSource {
    pub fn label(&self) -> String {
        match self {
            LakeSource::File(path) => path.clone(),
            LakeSource::Synthetic(spec) => format!("synthetic-{}", spec.profile.name()),
        }
    }
}

/// Noise covariances as written in a configuration. `Q` comes from
/// `q_diag` if given, else from `0.01·diag(vx², vy², (0.3048·vz)²)` with the
/// velocities of `q_velocity` or, for linear motion, of the control input.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_velocity: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_diag: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_diag: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0_diag: Option<[f64; 3]>,
}

impl NoiseSpec {
    pub fn resolve<T: Real>(&self, motion: &Motion<f64>) -> Result<NoiseConfig<T>> {
        if self.q_velocity.is_some() && self.q_diag.is_some() {
            return Err(Error::config(
                "give either noise.q_velocity or noise.q_diag, not both",
            ));
        }
        let lit = |v: f64| T::lit(v);
        let mut noise = match (self.q_diag, self.q_velocity, motion) {
            (Some(_), _, _) => NoiseConfig::from_velocity(T::zero(), T::zero(), T::zero()),
            (None, Some([vx, vy, vz]), _) => NoiseConfig::from_velocity(lit(vx), lit(vy), lit(vz)),
            (None, None, Motion::Linear(u)) => {
                NoiseConfig::from_velocity(lit(u.vx), lit(u.vy), lit(u.vz))
            }
            (None, None, Motion::Mixed(_)) => {
                return Err(Error::config(
                    "mixed motion needs noise.q_velocity or noise.q_diag",
                ))
            }
        };
        if let Some(d) = self.q_diag {
            noise.q = Matrix3::from_diagonal(&Vector3::new(lit(d[0]), lit(d[1]), lit(d[2])));
        }
        if let Some(d) = self.r_diag {
            noise.r = Matrix2::from_diagonal(&Vector2::new(lit(d[0]), lit(d[1])));
        }
        if let Some(d) = self.p0_diag {
            noise.p0 = Matrix3::from_diagonal(&Vector3::new(lit(d[0]), lit(d[1]), lit(d[2])));
        }
        noise.validate().map_err(|e| Error::config(e.to_string()))?;
        Ok(noise)
    }
}

/// A complete benchmark: lake, motion, noise, filters and replicate count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    #[serde(default)]
    pub name: String,
    pub lake: LakeSource,
    pub motion: Motion<f64>,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub init_pose: State<f64>,
    pub steps: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_filters")]
    pub filters: Vec<FilterKind>,
    #[serde(default)]
    pub pf: PfConfig,
    #[serde(default)]
    pub mpf: MpfConfig,
    #[serde(default)]
    pub ukf: UkfParams,
    #[serde(default)]
    pub jacobian: JacobianMode,
    #[serde(default = "default_divergence_radius")]
    pub divergence_radius: f64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_true")]
    pub process_noise: bool,
}

fn default_dt() -> f64 {
    1.0
}

fn default_runs() -> usize {
    1
}

fn default_filters() -> Vec<FilterKind> {
    FilterKind::ALL.to_vec()
}

fn default_true() -> bool {
    true
}

impl BenchmarkConfig {
    pub fn settings(&self) -> FilterSettings {
        FilterSettings {
            pf: self.pf,
            mpf: self.mpf,
            ukf: self.ukf,
            jacobian: self.jacobian,
            divergence_radius: self.divergence_radius,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::config("runs must be at least 1"));
        }
        if self.steps == 0 {
            return Err(Error::config("steps must be at least 1"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::config("dt must be positive"));
        }
        if self.filters.is_empty() {
            return Err(Error::config("filters must name at least one filter"));
        }
        let mut seen = self.filters.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.filters.len() {
            return Err(Error::config("filters lists a filter twice"));
        }
        if let LakeSource::Synthetic(spec) = &self.lake {
            spec.validate().map_err(|e| Error::config(e.to_string()))?;
        }
        if let Motion::Mixed(p) = &self.motion {
            p.validate().map_err(|e| Error::config(e.to_string()))?;
        }
        if !self.init_pose.is_finite() {
            return Err(Error::config("init_pose must be finite"));
        }
        self.settings().validate()?;
        self.noise.resolve::<f64>(&self.motion)?;
        Ok(())
    }
}

/// Truth and per-filter reports of one replicate.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub index: u64,
    pub truth: TruthRun<f64>,
    pub reports: Vec<RunReport>,
}

/// Simulates replicate `index` of `cfg` and runs every configured filter on
/// it, in the order listed.
pub fn run_replicate(
    cfg: &BenchmarkConfig,
    grid: &BathymetryGrid<f64>,
    index: u64,
) -> Result<Replicate> {
    let noise = cfg.noise.resolve::<f64>(&cfg.motion)?;
    let truth_seed = derive_seed(cfg.master_seed, index, TRUTH_STREAM);
    let truth = simulate_truth(
        grid,
        &cfg.motion,
        cfg.steps,
        &noise,
        cfg.dt,
        truth_seed,
        &cfg.init_pose,
        cfg.process_noise,
    )
    .map_err(|e| {
        if e.is_bounds() {
            Error::config(format!("init_pose: {e}"))
        } else {
            e
        }
    })?;
    let settings = cfg.settings();
    let reports = cfg
        .filters
        .iter()
        .map(|&kind| {
            let seed = derive_seed(cfg.master_seed, index, kind.stream());
            run_filter(
                kind,
                &settings,
                &truth,
                grid,
                &cfg.motion,
                &noise,
                index,
                seed,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Replicate {
        index,
        truth,
        reports,
    })
}

/// Summary statistics; `std` is the sample standard deviation (0 for a
/// single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn from_values(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                min: f64::NAN,
                max: f64::NAN,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub filter: FilterKind,
    pub runs: usize,
    pub rmse_x: Stats,
    pub rmse_y: Stats,
    pub rmse_z: Stats,
    pub rmse_horizontal: Stats,
    pub divergences: usize,
    pub truncated_runs: usize,
    /// Per-run filter-loop wall time in seconds. Not serialized.
    #[serde(skip)]
    pub runtime: Option<Stats>,
    /// Summed filter-loop wall time in seconds. Not serialized.
    #[serde(skip)]
    pub runtime_total: f64,
}

impl FilterSummary {
    pub fn from_records(filter: FilterKind, records: &[&RunRecord]) -> Self {
        let col = |f: fn(&RunRecord) -> f64| records.iter().map(|r| f(r)).collect::<Vec<_>>();
        let runtimes = col(|r| r.runtime_s);
        Self {
            filter,
            runs: records.len(),
            rmse_x: Stats::from_values(&col(|r| r.rmse_x)),
            rmse_y: Stats::from_values(&col(|r| r.rmse_y)),
            rmse_z: Stats::from_values(&col(|r| r.rmse_z)),
            rmse_horizontal: Stats::from_values(&col(|r| r.rmse_x.hypot(r.rmse_y))),
            divergences: records.iter().filter(|r| r.diverged).count(),
            truncated_runs: records.iter().filter(|r| r.truth_truncated).count(),
            runtime: Some(Stats::from_values(&runtimes)),
            runtime_total: runtimes.iter().sum(),
        }
    }
}

/// Monte Carlo results keyed by lake, motion and filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub report_version: u32,
    pub name: String,
    pub lake: String,
    pub motion: String,
    pub runs: usize,
    pub steps: usize,
    pub master_seed: u64,
    pub filters: Vec<FilterSummary>,
    /// Per-run rows in replicate order, filters in configured order.
    #[serde(skip)]
    pub records: Vec<RunRecord>,
}

impl AggregateReport {
    pub fn summary(&self, kind: FilterKind) -> Option<&FilterSummary> {
        self.filters.iter().find(|s| s.filter == kind)
    }
}

/// Runs `cfg.runs` replicates, in parallel on `workers` threads (all cores
/// when `None`). The result does not depend on `workers`.
pub fn monte_carlo(
    cfg: &BenchmarkConfig,
    grid: &BathymetryGrid<f64>,
    workers: Option<usize>,
) -> Result<AggregateReport> {
    cfg.validate()?;
    let run_all = || {
        (0..cfg.runs as u64)
            .into_par_iter()
            .map(|i| {
                run_replicate(cfg, grid, i).map(|rep| {
                    rep.reports
                        .iter()
                        .map(RunReport::record)
                        .collect::<Vec<_>>()
                })
            })
            .collect::<Result<Vec<_>>>()
    };
    let per_replicate = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::config(format!("cannot start {n} workers: {e}")))?
            .install(run_all)?,
        None => run_all()?,
    };
    let records: Vec<RunRecord> = per_replicate.into_iter().flatten().collect();
    Ok(aggregate(cfg, records))
}

/// Groups per-run records into per-filter summaries.
pub fn aggregate(cfg: &BenchmarkConfig, records: Vec<RunRecord>) -> AggregateReport {
    let filters = cfg
        .filters
        .iter()
        .map(|&kind| {
            let rows: Vec<&RunRecord> = records.iter().filter(|r| r.filter == kind).collect();
            FilterSummary::from_records(kind, &rows)
        })
        .collect();
    AggregateReport {
        report_version: REPORT_VERSION,
        name: cfg.name.clone(),
        lake: cfg.lake.label(),
        motion: cfg.motion.label().to_string(),
        runs: cfg.runs,
        steps: cfg.steps,
        master_seed: cfg.master_seed,
        filters,
        records,
    }
}

/// Draws a random state uniformly over the map, used by tests and tools that
/// need in-bounds samples.
pub fn random_in_bounds<T: Real, R: Rng + ?Sized>(
    grid: &BathymetryGrid<T>,
    rng: &mut R,
) -> Option<State<T>> {
    let (x, y, h) = crate::particle::random_map_position(grid, rng)?;
    Some(State::new(x, y, crate::rng::uniform(rng, T::zero(), h)))
}
