//! Reference implementations written without the crate's linear algebra.
#![allow(dead_code)]

use bathyloc_core::{BathymetryGrid, State};

pub type M3 = [[f64; 3]; 3];

/// Kalman filter for `x' = x + u·dt + w`, `y = H·x + d + e` with constant `H`.
#[derive(Debug, Clone, Copy)]
pub struct ExactKf {
    pub mean: [f64; 3],
    pub cov: M3,
}

impl ExactKf {
    pub fn new(mean: [f64; 3], cov: M3) -> Self {
        Self { mean, cov }
    }

    pub fn predict(&mut self, u: [f64; 3], dt: f64, q: &M3) {
        for i in 0..3 {
            self.mean[i] += u[i] * dt;
            for j in 0..3 {
                self.cov[i][j] += q[i][j];
            }
        }
    }

    pub fn correct(&mut self, h: &[[f64; 3]; 2], offset: [f64; 2], r: &[[f64; 2]; 2], z: [f64; 2]) {
        let p = self.cov;
        // PHᵀ, 3×2
        let mut pht = [[0.0; 2]; 3];
        for i in 0..3 {
            for k in 0..2 {
                pht[i][k] = (0..3).map(|j| p[i][j] * h[k][j]).sum();
            }
        }
        let mut s = *r;
        for a in 0..2 {
            for b in 0..2 {
                s[a][b] += (0..3).map(|j| h[a][j] * pht[j][b]).sum::<f64>();
            }
        }
        let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
        let s_inv = [
            [s[1][1] / det, -s[0][1] / det],
            [-s[1][0] / det, s[0][0] / det],
        ];
        let mut k = [[0.0; 2]; 3];
        for i in 0..3 {
            for b in 0..2 {
                k[i][b] = pht[i][0] * s_inv[0][b] + pht[i][1] * s_inv[1][b];
            }
        }
        let mut innov = [0.0; 2];
        for a in 0..2 {
            innov[a] = z[a] - offset[a] - (0..3).map(|j| h[a][j] * self.mean[j]).sum::<f64>();
        }
        for i in 0..3 {
            self.mean[i] += k[i][0] * innov[0] + k[i][1] * innov[1];
        }
        // (I − KH)P
        let mut next = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = p[i][j];
                for m in 0..3 {
                    acc -= (k[i][0] * h[0][m] + k[i][1] * h[1][m]) * p[m][j];
                }
                next[i][j] = acc;
            }
        }
        self.cov = next;
    }
}

/// An affine lake `L = c + gx·x + gy·y` and its constant measurement model.
#[derive(Debug, Clone, Copy)]
pub struct AffineLake {
    pub c: f64,
    pub gx: f64,
    pub gy: f64,
}

impl AffineLake {
    pub fn grid(&self, n: usize, cell: f64) -> BathymetryGrid<f64> {
        let Self { c, gx, gy } = *self;
        BathymetryGrid::<f64>::from_fn(n, n, cell, 0.0, 0.0, move |x, y| c + gx * x + gy * y)
            .unwrap()
    }

    /// `H` and offset `d` with depth `= pz` and altitude `= L − pz`.
    pub fn h(&self) -> ([[f64; 3]; 2], [f64; 2]) {
        ([[0.0, 0.0, 1.0], [self.gx, self.gy, -1.0]], [0.0, self.c])
    }
}

pub fn diag3(d: [f64; 3]) -> M3 {
    [[d[0], 0.0, 0.0], [0.0, d[1], 0.0], [0.0, 0.0, d[2]]]
}

pub fn diag2(d: [f64; 2]) -> [[f64; 2]; 2] {
    [[d[0], 0.0], [0.0, d[1]]]
}

/// Per-axis RMSE by explicit loops over `f64` tuples.
pub fn brute_rmse(truth: &[State<f64>], est: &[State<f64>]) -> [f64; 3] {
    let n = truth.len() as f64;
    let mut out = [0.0; 3];
    for axis in 0..3 {
        let mut acc = 0.0;
        for i in 0..truth.len() {
            let (a, b) = match axis {
                0 => (truth[i].px, est[i].px),
                1 => (truth[i].py, est[i].py),
                _ => (truth[i].pz, est[i].pz),
            };
            acc += (a - b).powi(2);
        }
        out[axis] = (acc / n).sqrt();
    }
    out
}

/// `max |a − b|` over the three axes.
pub fn max_axis_diff(a: &State<f64>, b: [f64; 3]) -> f64 {
    (a.px - b[0])
        .abs()
        .max((a.py - b[1]).abs())
        .max((a.pz - b[2]).abs())
}
