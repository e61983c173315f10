//! Shared helpers for the integration tests: random instances and
//! independent reference implementations.
#![allow(dead_code)]

use hetpbo_core::kde::AnchorModel;
use hetpbo_core::math::sampling::{stream, unit_open};
use hetpbo_core::math::{Matrix, RbfKernelParams, SquaredExponential};
use hetpbo_core::preference::{DuelDataset, DuelRecord};
use hetpbo_core::Point;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    stream(seed, 0)
}

pub fn kernel(lengthscale: f64) -> SquaredExponential {
    SquaredExponential::new(RbfKernelParams::new(lengthscale, 1.0).unwrap())
}

pub fn point(rng: &mut ChaCha8Rng, d: usize) -> Point {
    (0..d).map(|_| unit_open(rng)).collect()
}

pub fn random_dataset(rng: &mut ChaCha8Rng, d: usize, m: usize) -> DuelDataset {
    let duels = (0..m)
        .map(|_| DuelRecord::new(point(rng, d), point(rng, d)).unwrap())
        .collect();
    DuelDataset::from_duels(duels).unwrap()
}

pub fn random_anchors(rng: &mut ChaCha8Rng, d: usize, n: usize, h: f64, a: f64) -> AnchorModel {
    let anchors = (0..n).map(|_| point(rng, d)).collect();
    AnchorModel::new(anchors, h, a).unwrap()
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn inverse(a: &Matrix) -> Matrix {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = a.row(i).to_vec();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|x, y| m[*x][c].abs().total_cmp(&m[*y][c].abs())).unwrap();
        m.swap(c, p);
        let piv = m[c][c];
        for v in m[c].iter_mut() {
            *v /= piv;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                if f != 0.0 {
                    for k in 0..2 * n {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
    }
    Matrix::from_fn(n, n, |i, j| m[i][n + j])
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    Matrix::from_fn(a.rows(), b.cols(), |i, j| (0..a.cols()).map(|k| a[(i, k)] * b[(k, j)]).sum())
}

pub fn transpose(a: &Matrix) -> Matrix {
    Matrix::from_fn(a.cols(), a.rows(), |i, j| a[(j, i)])
}

pub fn matvec(a: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..a.rows()).map(|i| (0..a.cols()).map(|k| a[(i, k)] * v[k]).sum()).collect()
}

/// `Φ` via the complementary error function.
pub fn phi_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn phi_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Two-sided one-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Critical value of the KS statistic at α = 0.01 (asymptotic).
pub fn ks_critical_01(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

/// Derivative-free minimizer (Nelder-Mead) used as an independent optimizer.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], step: f64, iters: usize) -> Vec<f64> {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        simplex.push(x);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|x| f(x)).collect();
    for _ in 0..iters {
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|a, b| vals[*a].total_cmp(&vals[*b]));
        simplex = idx.iter().map(|i| simplex[*i].clone()).collect();
        vals = idx.iter().map(|i| vals[*i]).collect();
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|x| x[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (simplex[n][j] - centroid[j])).collect() };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[n] = xe;
                vals[n] = fe;
            } else {
                simplex[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            simplex[n] = xr;
            vals[n] = fr;
        } else {
            let xc = along(0.5);
            let fc = f(&xc);
            if fc < vals[n] {
                simplex[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    simplex[i] = (0..n).map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j])).collect();
                    vals[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=n).min_by(|a, b| vals[*a].total_cmp(&vals[*b])).unwrap();
    simplex[best].clone()
}
