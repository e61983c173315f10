//! Monte-Carlo checks of how fast the anchor estimator `σ̂²` converges to the
//! oracle variance `σ²` as the number of i.i.d. anchors grows.
//!
//! With bandwidth `h = α·n^(−1/(2β+d))` the mean squared error should decay
//! like `n^(−2β/(2β+d))`; only the exponent is checked, the constant is not
//! computable. Trial `j` at grid index `i` always uses RNG stream
//! `i·trials + j`, so callers may evaluate trials in any order or in parallel.

use alloc::vec::Vec;

use rand_core::RngCore;

use crate::kde::AnchorModel;
use crate::math::sampling::{halton, stream};
use crate::oracle::TrueUncertaintyOracle;
use crate::{Error, Point, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BandwidthRule {
    /// `h = alpha · n^(−1/(2·beta + d))`.
    Rate { alpha: f64, beta: f64 },
    Fixed(f64),
}

impl BandwidthRule {
    pub fn bandwidth(&self, n: usize, dim: usize) -> f64 {
        match *self {
            BandwidthRule::Rate { alpha, beta } => {
                alpha * libm::pow(n as f64, -1.0 / (2.0 * beta + dim as f64))
            }
            BandwidthRule::Fixed(h) => h,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatePoint {
    pub n: usize,
    pub bandwidth: f64,
    pub mse: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateReport {
    pub points: Vec<RatePoint>,
    /// Least-squares slope of `ln mse` against `ln n`.
    pub slope: f64,
}

/// `count` quasi-random probes in the box `center ± 2·scale`.
pub fn default_probes(oracle: &TrueUncertaintyOracle, count: usize) -> Vec<Point> {
    let d = oracle.dim();
    (1..=count as u64)
        .map(|i| {
            let u = halton(i, d);
            oracle
                .center()
                .iter()
                .zip(oracle.scale())
                .zip(&u)
                .map(|((c, s), u)| c + s * (4.0 * u - 2.0))
                .collect()
        })
        .collect()
}

/// Mean over `probes` of `(σ̂² − σ²)²` for one anchor set of size `n`.
pub fn trial_mse<R: RngCore + ?Sized>(
    oracle: &TrueUncertaintyOracle,
    n: usize,
    bandwidth: f64,
    probes: &[Point],
    rng: &mut R,
) -> Result<f64> {
    let errors = trial_errors(oracle, n, bandwidth, probes, rng)?;
    Ok(errors.iter().map(|e| e * e).sum::<f64>() / errors.len().max(1) as f64)
}

/// Signed errors `σ̂²(x) − σ²(x)` at each probe for one anchor set.
pub fn trial_errors<R: RngCore + ?Sized>(
    oracle: &TrueUncertaintyOracle,
    n: usize,
    bandwidth: f64,
    probes: &[Point],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let anchors: Vec<Point> = (0..n).map(|_| oracle.sample(rng)).collect();
    let model = AnchorModel::new(anchors, bandwidth, oracle.noise_scale())?;
    Ok(probes
        .iter()
        .map(|x| model.noise_variance(x) - oracle.noise_variance(x))
        .collect())
}

/// Per-trial MSE values at one anchor count, using the streams of grid index
/// `grid_index`.
pub fn mse_samples(
    oracle: &TrueUncertaintyOracle,
    n: usize,
    bandwidth: f64,
    probes: &[Point],
    trials: usize,
    seed: u64,
    grid_index: usize,
) -> Result<Vec<f64>> {
    (0..trials)
        .map(|j| {
            let mut rng = stream(seed, (grid_index * trials + j) as u64);
            trial_mse(oracle, n, bandwidth, probes, &mut rng)
        })
        .collect()
}

pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let k = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| libm::log(p.0)).collect();
    let ys: Vec<f64> = points.iter().map(|p| libm::log(p.1)).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn rate_check(
    oracle: &TrueUncertaintyOracle,
    n_grid: &[usize],
    rule: BandwidthRule,
    trials: usize,
    probes: &[Point],
    seed: u64,
) -> Result<RateReport> {
    if n_grid.len() < 2 || n_grid.windows(2).any(|w| w[0] >= w[1]) || n_grid[0] == 0 {
        return Err(Error::InvalidParameter("anchor counts must be positive and strictly increasing".into()));
    }
    if trials == 0 || probes.is_empty() {
        return Err(Error::InvalidParameter("rate check needs trials and probe points".into()));
    }
    let mut points = Vec::with_capacity(n_grid.len());
    for (i, &n) in n_grid.iter().enumerate() {
        let h = rule.bandwidth(n, oracle.dim());
        let samples = mse_samples(oracle, n, h, probes, trials, seed, i)?;
        points.push(RatePoint {
            n,
            bandwidth: h,
            mse: samples.iter().sum::<f64>() / trials as f64,
        });
    }
    Ok(report(points))
}

/// Assembles a report from already computed points.
pub fn report(points: Vec<RatePoint>) -> RateReport {
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.n as f64, p.mse)).collect();
    let slope = log_log_slope(&pairs);
    RateReport { points, slope }
}

/// Constants of the high-probability bound
/// `|σ̂² − σ²| ≤ a·(√(4·c1·ln(2/δ)/(n·h)) + c2·h²)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConcentrationConstants {
    pub c1: f64,
    pub c2: f64,
}

impl ConcentrationConstants {
    pub fn bound(&self, a: f64, n: usize, h: f64, delta: f64) -> f64 {
        a * (libm::sqrt(4.0 * self.c1 * libm::log(2.0 / delta) / (n as f64 * h)) + self.c2 * h * h)
    }
}

/// Calibrates the constants from `trials` anchor sets of size `n`: `c2`
/// absorbs the worst probe bias, `c1` the `(1 − δ/2)` quantile of the
/// fluctuation around the per-probe mean.
pub fn fit_concentration_constants(
    oracle: &TrueUncertaintyOracle,
    n: usize,
    bandwidth: f64,
    probes: &[Point],
    trials: usize,
    delta: f64,
    seed: u64,
) -> Result<ConcentrationConstants> {
    let errors = error_table(oracle, n, bandwidth, probes, trials, seed)?;
    let a = oracle.noise_scale();
    let p = probes.len();
    let means: Vec<f64> = (0..p)
        .map(|k| errors.iter().map(|row| row[k]).sum::<f64>() / trials as f64)
        .collect();
    let bias = means.iter().fold(0.0f64, |m, b| m.max(libm::fabs(*b)));
    let mut spread: Vec<f64> = errors
        .iter()
        .flat_map(|row| row.iter().zip(&means).map(|(e, m)| libm::fabs(e - m)))
        .collect();
    spread.sort_by(f64::total_cmp);
    let idx = ((1.0 - 0.5 * delta) * (spread.len() - 1) as f64) as usize;
    let q = spread[idx];
    Ok(ConcentrationConstants {
        c1: (q / a) * (q / a) * n as f64 * bandwidth / (4.0 * libm::log(2.0 / delta)),
        c2: bias / (a * bandwidth * bandwidth),
    })
}

/// Fraction of (trial, probe) pairs whose error exceeds the bound.
pub fn concentration_exceedance(
    oracle: &TrueUncertaintyOracle,
    n: usize,
    bandwidth: f64,
    probes: &[Point],
    trials: usize,
    delta: f64,
    constants: ConcentrationConstants,
    seed: u64,
) -> Result<f64> {
    let errors = error_table(oracle, n, bandwidth, probes, trials, seed)?;
    let bound = constants.bound(oracle.noise_scale(), n, bandwidth, delta);
    let total = errors.len() * probes.len();
    let over = errors.iter().flatten().filter(|e| libm::fabs(**e) > bound).count();
    Ok(over as f64 / total as f64)
}

fn error_table(
    oracle: &TrueUncertaintyOracle,
    n: usize,
    bandwidth: f64,
    probes: &[Point],
    trials: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if trials == 0 || probes.is_empty() {
        return Err(Error::InvalidParameter("concentration check needs trials and probe points".into()));
    }
    (0..trials)
        .map(|j| trial_errors(oracle, n, bandwidth, probes, &mut stream(seed, j as u64)))
        .collect()
}
