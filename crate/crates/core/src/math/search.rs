//! Bounded minimization over positive scale parameters: a log-spaced grid
//! followed by golden-section refinement around the best grid cell.
//!
//! Objectives return `None` (or a non-finite value) where they cannot be
//! evaluated; such probes count as `+∞`. The reported minimum is never worse
//! than any probed value.

use alloc::vec::Vec;

use crate::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogGridSearch {
    pub grid: usize,
    pub refine_iters: usize,
}

impl Default for LogGridSearch {
    fn default() -> Self {
        Self {
            grid: 64,
            refine_iters: 40,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarMinimum {
    pub x: f64,
    pub value: f64,
    /// Every `(x, value)` evaluated, in order.
    pub probes: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanarMinimum {
    pub x: f64,
    pub y: f64,
    pub value: f64,
    pub evaluations: usize,
}

fn sanitize(v: Option<f64>) -> f64 {
    match v {
        Some(v) if v.is_finite() => v,
        _ => f64::INFINITY,
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || lo == hi {
        return alloc::vec![lo];
    }
    let (a, b) = (libm::log(lo), libm::log(hi));
    (0..n)
        .map(|i| libm::exp(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

fn check_bounds(lo: f64, hi: f64) -> Result<()> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::InvalidParameter(alloc::format!(
            "search bounds must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
        )));
    }
    Ok(())
}

/// Golden-section search of `f(exp(t))` for `t ∈ [a, b]`, recording probes.
fn golden_log(
    f: &mut impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    iters: usize,
    best: &mut (f64, f64),
    mut record: impl FnMut(f64, f64),
) {
    let (mut a, mut b) = (a, b);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut eval = |t: f64, best: &mut (f64, f64)| {
        let x = libm::exp(t);
        let v = f(x);
        record(x, v);
        if v < best.1 {
            *best = (x, v);
        }
        v
    };
    let mut fc = eval(c, best);
    let mut fd = eval(d, best);
    for _ in 0..iters {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c, best);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d, best);
        }
    }
}

pub fn minimize_log_scalar(
    mut f: impl FnMut(f64) -> Option<f64>,
    lo: f64,
    hi: f64,
    opts: LogGridSearch,
) -> Result<ScalarMinimum> {
    check_bounds(lo, hi)?;
    let grid = log_grid(lo, hi, opts.grid);
    let mut probes = Vec::with_capacity(grid.len() + 2 * opts.refine_iters + 2);
    let mut best = (lo, f64::INFINITY);
    let mut best_idx = 0;
    for (i, x) in grid.iter().enumerate() {
        let v = sanitize(f(*x));
        probes.push((*x, v));
        if v < best.1 {
            best = (*x, v);
            best_idx = i;
        }
    }
    if !best.1.is_finite() {
        return Err(Error::SearchFailed);
    }
    if grid.len() > 1 && opts.refine_iters > 0 {
        let a = libm::log(grid[best_idx.saturating_sub(1)]);
        let b = libm::log(grid[(best_idx + 1).min(grid.len() - 1)]);
        let mut obj = |x: f64| sanitize(f(x));
        golden_log(&mut obj, a, b, opts.refine_iters, &mut best, |x, v| probes.push((x, v)));
    }
    Ok(ScalarMinimum {
        x: best.0,
        value: best.1,
        probes,
    })
}

/// Two positive parameters: grid over both axes, then alternating
/// golden-section refinement along each axis.
pub fn minimize_log_planar(
    mut f: impl FnMut(f64, f64) -> Option<f64>,
    x_bounds: (f64, f64),
    y_bounds: (f64, f64),
    grid: usize,
    rounds: usize,
    refine_iters: usize,
) -> Result<PlanarMinimum> {
    check_bounds(x_bounds.0, x_bounds.1)?;
    check_bounds(y_bounds.0, y_bounds.1)?;
    let gx = log_grid(x_bounds.0, x_bounds.1, grid);
    let gy = log_grid(y_bounds.0, y_bounds.1, grid);
    let mut evaluations = 0;
    let mut best = (gx[0], gy[0], f64::INFINITY);
    let mut best_idx = (0, 0);
    for (i, x) in gx.iter().enumerate() {
        for (j, y) in gy.iter().enumerate() {
            let v = sanitize(f(*x, *y));
            evaluations += 1;
            if v < best.2 {
                best = (*x, *y, v);
                best_idx = (i, j);
            }
        }
    }
    if !best.2.is_finite() {
        return Err(Error::SearchFailed);
    }
    let bracket = |g: &[f64], i: usize| {
        (
            libm::log(g[i.saturating_sub(1)]),
            libm::log(g[(i + 1).min(g.len() - 1)]),
        )
    };
    let (xa, xb) = bracket(&gx, best_idx.0);
    let (ya, yb) = bracket(&gy, best_idx.1);
    for _ in 0..rounds {
        if xa < xb {
            let y = best.1;
            let mut b1 = (best.0, best.2);
            let mut obj = |x: f64| sanitize(f(x, y));
            golden_log(&mut obj, xa, xb, refine_iters, &mut b1, |_, _| evaluations += 1);
            if b1.1 < best.2 {
                best = (b1.0, y, b1.1);
            }
        }
        if ya < yb {
            let x = best.0;
            let mut b2 = (best.1, best.2);
            let mut obj = |y: f64| sanitize(f(x, y));
            golden_log(&mut obj, ya, yb, refine_iters, &mut b2, |_, _| evaluations += 1);
            if b2.1 < best.2 {
                best = (x, b2.0, b2.1);
            }
        }
    }
    Ok(PlanarMinimum {
        x: best.0,
        y: best.1,
        value: best.2,
        evaluations,
    })
}
