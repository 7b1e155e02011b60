//! Independent reference solvers and random instances shared by the
//! integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

use shapedict::DenseMatrix;

pub fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn unit_columns<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DenseMatrix {
    let mut m = gaussian_matrix(rng, rows, cols);
    for mut c in m.column_iter_mut() {
        let n = c.norm();
        c /= n;
    }
    DenseMatrix::new(m).unwrap()
}

pub fn gaussian_vector<R: Rng>(rng: &mut R, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// `b = A x` for a random `t`-sparse `x` with coefficients bounded away from zero.
pub fn planted_signal<R: Rng>(rng: &mut R, a: &DenseMatrix, t: usize) -> DVector<f64> {
    let mut x = DVector::zeros(a.ncols());
    for j in sample(rng, a.ncols(), t) {
        let mag: f64 = rng.random_range(0.5..2.0);
        x[j] = if rng.random_bool(0.5) { mag } else { -mag };
    }
    a.as_matrix() * x
}

/// Residual norm of the least-squares fit of `b` on columns `support`.
pub fn subset_residual(a: &DMatrix<f64>, b: &DVector<f64>, support: &[usize]) -> f64 {
    let sub = DMatrix::from_fn(a.nrows(), support.len(), |r, c| a[(r, support[c])]);
    let qr = sub.clone().qr();
    let q = qr.q();
    (b - &q * (q.tr_mul(b))).norm()
}

/// Smallest residual over every support of size `t`, by enumeration.
pub fn brute_force_residual(a: &DMatrix<f64>, b: &DVector<f64>, t: usize) -> f64 {
    fn rec(
        a: &DMatrix<f64>,
        b: &DVector<f64>,
        start: usize,
        left: usize,
        chosen: &mut Vec<usize>,
        best: &mut f64,
    ) {
        if left == 0 {
            *best = best.min(subset_residual(a, b, chosen));
            return;
        }
        for j in start..=(a.ncols() - left) {
            chosen.push(j);
            rec(a, b, j + 1, left - 1, chosen, best);
            chosen.pop();
        }
    }
    let mut best = f64::INFINITY;
    rec(a, b, 0, t, &mut Vec::new(), &mut best);
    best
}

/// Coordinate-descent lasso, `½‖b - A x‖² + λ‖x‖₁`, warm-started from `x`.
pub struct CdLasso {
    gram: DMatrix<f64>,
    corr: DVector<f64>,
}

impl CdLasso {
    pub fn new(a: &DMatrix<f64>, b: &DVector<f64>) -> Self {
        CdLasso {
            gram: a.tr_mul(a),
            corr: a.tr_mul(b),
        }
    }

    pub fn lambda_max(&self) -> f64 {
        self.corr.amax()
    }

    pub fn solve(&self, lambda: f64, x: &mut DVector<f64>) {
        let k = x.len();
        for _ in 0..100_000 {
            let mut delta: f64 = 0.0;
            for j in 0..k {
                let g =
                    self.corr[j] - self.gram.row(j).transpose().dot(x) + self.gram[(j, j)] * x[j];
                let z = g.abs() - lambda;
                let new = if z > 0.0 {
                    z.copysign(g) / self.gram[(j, j)]
                } else {
                    0.0
                };
                delta = delta.max((new - x[j]).abs());
                x[j] = new;
            }
            if delta < 1e-14 * (1.0 + x.amax()) {
                break;
            }
        }
    }

    /// Indices in the order they first become non-zero as `λ` decreases from
    /// `λ_max` to `floor · λ_max`, with the entry level of each. Stops once
    /// `max_entries` indices have entered.
    ///
    /// A geometric grid brackets each entry and bisection on `λ` orders
    /// entries that fall into the same grid interval.
    pub fn entry_order(&self, grid: usize, floor: f64, max_entries: usize) -> Vec<(usize, f64)> {
        let k = self.corr.len();
        let lmax = self.lambda_max();
        let ratio = floor.powf(1.0 / grid as f64);
        let mut x = DVector::zeros(k);
        let mut entered = vec![false; k];
        let mut out = Vec::new();
        let mut hi = lmax;
        let mut x_hi = x.clone();
        for i in 1..=grid {
            let lo = lmax * ratio.powi(i as i32);
            self.solve(lo, &mut x);
            let fresh: Vec<usize> = (0..k).filter(|&j| !entered[j] && x[j] != 0.0).collect();
            let mut found: Vec<(usize, f64)> = fresh
                .iter()
                .map(|&j| (j, self.entry_level(j, hi, lo, &x_hi)))
                .collect();
            found.sort_by(|p, q| q.1.partial_cmp(&p.1).unwrap());
            for &(j, _) in &found {
                entered[j] = true;
            }
            out.extend(found);
            if out.len() >= max_entries {
                break;
            }
            hi = lo;
            x_hi = x.clone();
        }
        out
    }

    /// Largest `λ` in `[lo, hi]` at which coordinate `j` is non-zero.
    fn entry_level(&self, j: usize, mut hi: f64, mut lo: f64, start: &DVector<f64>) -> f64 {
        let mut x = start.clone();
        for _ in 0..45 {
            let mid = 0.5 * (hi + lo);
            let mut trial = x.clone();
            self.solve(mid, &mut trial);
            if trial[j] != 0.0 {
                lo = mid;
            } else {
                hi = mid;
                x = trial;
            }
            if hi - lo <= 1e-12 * hi {
                break;
            }
        }
        lo
    }
}
