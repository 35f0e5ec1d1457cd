//! Procedural lakes used in place of surveyed bathymetry.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BathymetryGrid, DEFAULT_NODATA};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LakeProfile {
    /// Paraboloid basin; near-symmetric, little distinguishing relief.
    Bowl,
    /// Affine floor; flat when `asymmetry` is 0.
    TiltedPlane,
    /// Bowl crossed by a submerged diagonal ridge.
    Ridge,
    /// Two basins of unequal depth and size.
    TwinBasin,
}

impl LakeProfile {
    pub fn name(self) -> &'static str {
        match self {
            LakeProfile::Bowl => "bowl",
            LakeProfile::TiltedPlane => "tilted-plane",
            LakeProfile::Ridge => "ridge",
            LakeProfile::TwinBasin => "twin-basin",
        }
    }
}

impl FromStr for LakeProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bowl" => Ok(LakeProfile::Bowl),
            "tilted-plane" => Ok(LakeProfile::TiltedPlane),
            "ridge" => Ok(LakeProfile::Ridge),
            "twin-basin" => Ok(LakeProfile::TwinBasin),
            other => Err(Error::value(format!("unknown lake profile `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticLakeSpec {
    pub ncols: usize,
    pub nrows: usize,
    #[serde(default = "default_cell_size")]
    pub cell_size: f64,
    pub profile: LakeProfile,
    pub max_height: f64,
    #[serde(default)]
    pub asymmetry: f64,
    #[serde(default)]
    pub noise_amplitude: f64,
    /// Highest number of noise wave periods across the lake.
    #[serde(default = "default_noise_periods")]
    pub noise_periods: f64,
    #[serde(default)]
    pub seed: u64,
    /// Zero the outermost ring of cells (the shoreline).
    #[serde(default = "default_true")]
    pub shoreline: bool,
}

fn default_cell_size() -> f64 {
    1.0
}

fn default_noise_periods() -> f64 {
    3.0
}

fn default_true() -> bool {
    true
}

impl SyntheticLakeSpec {
    pub fn new(ncols: usize, nrows: usize, profile: LakeProfile, max_height: f64) -> Self {
        Self {
            ncols,
            nrows,
            cell_size: 1.0,
            profile,
            max_height,
            asymmetry: 0.0,
            noise_amplitude: 0.0,
            noise_periods: default_noise_periods(),
            seed: 0,
            shoreline: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ncols < 2 || self.nrows < 2 {
            return Err(Error::value("synthetic lake needs at least 2×2 cells"));
        }
        if !(self.cell_size > 0.0) || !self.cell_size.is_finite() {
            return Err(Error::value("cell_size must be positive"));
        }
        if !(self.max_height > 0.0) || !self.max_height.is_finite() {
            return Err(Error::value(format!(
                "max_height must be positive, got {}",
                self.max_height
            )));
        }
        if !(0.0..=1.0).contains(&self.asymmetry) {
            return Err(Error::value("asymmetry must lie in [0, 1]"));
        }
        if !(self.noise_amplitude >= 0.0) || !self.noise_amplitude.is_finite() {
            return Err(Error::value("noise_amplitude must be non-negative"));
        }
        if !(self.noise_periods > 0.0) || !self.noise_periods.is_finite() {
            return Err(Error::value("noise_periods must be positive"));
        }
        Ok(())
    }

    /// Generates the lake. Identical specs produce bit-identical grids.
    pub fn generate<T: Real>(&self) -> Result<BathymetryGrid<T>> {
        self.validate()?;
        let noise = SmoothNoise::new(self.seed, self.noise_amplitude, self.noise_periods);
        let (w, h) = (self.ncols as f64, self.nrows as f64);
        let mut heights = Vec::with_capacity(self.ncols * self.nrows);
        for r in 0..self.nrows {
            for c in 0..self.ncols {
                let on_ring = r == 0 || c == 0 || r + 1 == self.nrows || c + 1 == self.ncols;
                if self.shoreline && on_ring {
                    heights.push(T::zero());
                    continue;
                }
                // Normalized coordinates of the cell center: the outermost
                // centers sit at ±1.
                let u = normalized(c, self.ncols);
                let v = normalized(r, self.nrows);
                let base = self.profile_height(u, v);
                let jitter = noise.at(c as f64 / w, r as f64 / h);
                heights.push(T::lit((base + jitter).max(0.0)));
            }
        }
        BathymetryGrid::new(
            self.ncols,
            self.nrows,
            T::lit(self.cell_size),
            T::zero(),
            T::zero(),
            T::lit(DEFAULT_NODATA),
            heights,
        )
    }

    fn profile_height(&self, u: f64, v: f64) -> f64 {
        let m = self.max_height;
        let a = self.asymmetry;
        match self.profile {
            LakeProfile::Bowl => m * bowl(u, v, 0.4 * a, 0.25 * a),
            LakeProfile::TiltedPlane => m * (1.0 - 0.5 * a * (u + 1.0)),
            LakeProfile::Ridge => {
                let d = (u - v - 0.3 * a) / std::f64::consts::SQRT_2;
                m * bowl(u, v, 0.2 * a, -0.1 * a) * (1.0 - 0.55 * (-(d * d) / 0.02).exp())
            }
            LakeProfile::TwinBasin => {
                let edge = (1.0 - u.abs().max(v.abs()).powi(8)).max(0.0);
                let g = |cx: f64, cy: f64, sx: f64, sy: f64| {
                    (-((u - cx) / sx).powi(2) - ((v - cy) / sy).powi(2)).exp()
                };
                let deep = g(-0.42, -0.25, 0.38, 0.45);
                let shallow = g(0.45, 0.35, 0.3 + 0.1 * a, 0.28);
                let shelf = 0.15 * (1.0 - (u * u + v * v) / 2.0);
                let raw = deep + (0.65 - 0.25 * a) * shallow + shelf;
                (m * raw * edge / 1.02).min(m)
            }
        }
    }
}

fn normalized(i: usize, n: usize) -> f64 {
    2.0 * i as f64 / (n - 1) as f64 - 1.0
}

/// `1 − r²` clamped at 0, with the deepest point moved to `(cx, cy)` and the
/// radius rescaled per half-axis so that the edges stay at `r = 1`.
fn bowl(u: f64, v: f64, cx: f64, cy: f64) -> f64 {
    let skew = |t: f64, c: f64| {
        if t >= c {
            (t - c) / (1.0 - c)
        } else {
            (t - c) / (1.0 + c)
        }
    };
    let (su, sv) = (skew(u, cx), skew(v, cy));
    (1.0 - (su * su + sv * sv)).max(0.0)
}

/// Sum of a few random low-frequency plane waves.
struct SmoothNoise {
    waves: Vec<(f64, f64, f64)>,
    amplitude: f64,
}

impl SmoothNoise {
    const WAVES: usize = 6;

    fn new(seed: u64, amplitude: f64, periods: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 2.0 * periods;
        let waves = (0..Self::WAVES)
            .map(|_| {
                let kx = rng.random_range(-k..k);
                let ky = rng.random_range(-k..k);
                let phase = rng.random_range(0.0..2.0 * PI);
                (kx, ky, phase)
            })
            .collect();
        Self { waves, amplitude }
    }

    fn at(&self, s: f64, t: f64) -> f64 {
        if self.amplitude == 0.0 {
            return 0.0;
        }
        let sum: f64 = self
            .waves
            .iter()
            .map(|&(kx, ky, p)| (PI * (kx * s + ky * t) + p).sin())
            .sum();
        self.amplitude * sum / (Self::WAVES as f64).sqrt()
    }
}
