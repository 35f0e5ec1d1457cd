mod common;

use bathyloc_core::gaussian::{ekf_correct, ekf_predict, ukf_correct, ukf_predict};
use bathyloc_core::linalg::min_eigenvalue;
use bathyloc_core::models::measure;
use bathyloc_core::sim::simulate_truth;
use bathyloc_core::{
    BathymetryGrid, ControlInput, GaussianBelief, JacobianMode, Measurement, MixedMotionParams,
    Motion, NoiseConfig, State, UkfParams,
};
use common::{AffineLake, ExactKf};
use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MEAN_TOL: f64 = 1e-8;
const COV_TOL: f64 = 1e-7;

fn to_arrays(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = m[(i, j)];
        }
    }
    out
}

fn cov_diff(a: &Matrix3<f64>, b: &[[f64; 3]; 3]) -> f64 {
    let mut d = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            d = d.max((a[(i, j)] - b[i][j]).abs());
        }
    }
    d
}

#[test]
fn ekf_and_ukf_match_exact_kf_on_affine_lake() {
    let lake = AffineLake {
        c: 20.0,
        gx: 0.02,
        gy: 0.01,
    };
    let grid = lake.grid(300, 1.0);
    let u = ControlInput::new(1.0, -3.0, -0.1524);
    let motion = Motion::Linear(u);
    let noise = NoiseConfig::<f64>::from_velocity(u.vx, u.vy, u.vz);
    let start = State::new(100.0, 250.0, 10.0);
    for seed in 0..5 {
        let truth = simulate_truth(&grid, &motion, 50, &noise, 1.0, seed, &start, true).unwrap();
        assert_eq!(truth.len(), 50);
        let (h, d) = lake.h();
        let q = to_arrays(&noise.q);
        let r = [
            [noise.r[(0, 0)], noise.r[(0, 1)]],
            [noise.r[(1, 0)], noise.r[(1, 1)]],
        ];
        let mut kf = ExactKf::new([start.px, start.py, start.pz], to_arrays(&noise.p0));
        let mut ekf = GaussianBelief::new(start, noise.p0);
        let mut ukf = ekf;
        let params = UkfParams::default();
        for (t, z) in truth.measurements.iter().enumerate() {
            if t > 0 {
                kf.predict([u.vx, u.vy, u.vz], 1.0, &q);
                ekf = ekf_predict(&ekf, &motion, &noise.q, &grid, 1.0).unwrap();
                ukf = ukf_predict(&ukf, &motion, &noise.q, &grid, 1.0, &params).unwrap();
            }
            kf.correct(&h, d, &r, [z.depth, z.altitude]);
            ekf = ekf_correct(&ekf, z, &grid, &noise.r, JacobianMode::Analytic).unwrap();
            ukf = ukf_correct(&ukf, z, &grid, &noise.r, &params).unwrap();
            for (name, b) in [("ekf", &ekf), ("ukf", &ukf)] {
                let dm = common::max_axis_diff(&b.mean, kf.mean);
                assert!(
                    dm <= MEAN_TOL,
                    "{name} seed {seed} step {t}: mean off by {dm:e}"
                );
                let dc = cov_diff(&b.cov, &kf.cov);
                assert!(
                    dc <= COV_TOL,
                    "{name} seed {seed} step {t}: cov off by {dc:e}"
                );
            }
        }
    }
}

#[test]
fn covariances_stay_psd_over_many_cycles() {
    let grid = BathymetryGrid::<f64>::from_fn(200, 200, 1.0, 0.0, 0.0, |x, y| {
        14.0 + 4.0 * (x / 13.0).sin() * (y / 17.0).cos() + 0.02 * x
    })
    .unwrap();
    let motion = Motion::Mixed(MixedMotionParams {
        a: 0.05,
        a_d: 2.0,
        a_off: -6.0,
        b: -0.05,
        b_d: 2.0,
        b_off: -6.0,
        vz: 0.0,
    });
    let noise = NoiseConfig::<f64>::from_velocity(1.0, 1.0, 0.1);
    let params = UkfParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut ekf = GaussianBelief::new(State::new(100.0, 100.0, 5.0), noise.p0);
    let mut ukf = ekf;
    for cycle in 0..1000 {
        if !grid.in_bounds(ekf.mean.px, ekf.mean.py) || !grid.in_bounds(ukf.mean.px, ukf.mean.py) {
            ekf = GaussianBelief::new(State::new(100.0, 100.0, 5.0), noise.p0);
            ukf = ekf;
        }
        let z = Measurement::new(
            5.0 + rng.random_range(-0.5..0.5),
            rng.random_range(5.0..13.0),
        );
        if let Ok(next) = ekf_predict(&ekf, &motion, &noise.q, &grid, 1.0)
            .and_then(|b| ekf_correct(&b, &z, &grid, &noise.r, JacobianMode::Analytic))
        {
            ekf = next;
        }
        if let Ok(next) = ukf_predict(&ukf, &motion, &noise.q, &grid, 1.0, &params)
            .and_then(|b| ukf_correct(&b, &z, &grid, &noise.r, &params))
        {
            ukf = next;
        }
        for (name, b) in [("ekf", &ekf), ("ukf", &ukf)] {
            assert_eq!(b.cov, b.cov.transpose(), "{name} cycle {cycle}: asymmetric");
            let floor = -1e-9 * b.cov.trace();
            assert!(
                min_eigenvalue(&b.cov) >= floor,
                "{name} cycle {cycle}: not PSD"
            );
        }
    }
}

#[test]
fn gaussian_filters_are_deterministic() {
    let grid = BathymetryGrid::<f64>::from_fn(100, 100, 1.0, 0.0, 0.0, |x, y| {
        10.0 + 2.0 * (x / 7.0).sin() + (y / 5.0).cos()
    })
    .unwrap();
    let motion = Motion::Linear(ControlInput::new(0.5, 0.25, 0.0));
    let noise = NoiseConfig::<f64>::from_velocity(0.5, 0.25, 0.1);
    let run = || {
        let mut b = GaussianBelief::new(State::new(30.0, 30.0, 4.0), noise.p0);
        let mut out = Vec::new();
        for t in 0..30 {
            let truth = State::new(30.0 + 0.5 * t as f64, 30.0 + 0.25 * t as f64, 4.0);
            let z = measure(&grid, &truth).unwrap();
            b = ukf_predict(&b, &motion, &noise.q, &grid, 1.0, &UkfParams::default()).unwrap();
            b = ekf_correct(&b, &z, &grid, &noise.r, JacobianMode::Analytic).unwrap();
            out.push((
                b.mean.px.to_bits(),
                b.mean.py.to_bits(),
                b.cov[(0, 1)].to_bits(),
            ));
        }
        out
    };
    assert_eq!(run(), run());
}
