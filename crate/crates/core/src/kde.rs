//! Anchor-based estimate of judgment noise.
//!
//! Anchors are designs the user can compare reliably. Their Gaussian KDE
//! `p̂(x | h, X₀) = (1/n) Σᵢ h⁻ᵈ k(‖x − xᵢ‖/h)` (with the one-dimensional
//! kernel `k(u) = e^{−u²/2}/√(2π)` applied to the Euclidean distance) drives
//! the noise variance `σ̂²(x) = a·exp(−p̂(x))`: close to the anchors the
//! variance drops toward `a·e^{−p̂}`, far away it saturates at `a`.

use alloc::format;
use alloc::vec::Vec;

use crate::math::search::{minimize_log_scalar, LogGridSearch};
use crate::math::BoxDomain;
use crate::{Error, Point, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Anything that assigns a judgment-noise variance to a design.
pub trait NoiseModel {
    fn noise_variance(&self, x: &[f64]) -> f64;
}

/// Constant noise variance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homoscedastic(pub f64);

impl NoiseModel for Homoscedastic {
    fn noise_variance(&self, _x: &[f64]) -> f64 {
        self.0
    }
}

#[inline]
pub fn gaussian_kernel(u: f64) -> f64 {
    libm::exp(-0.5 * u * u - LN_SQRT_2PI)
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AnchorModel {
    anchors: Vec<Point>,
    bandwidth: f64,
    scale: f64,
}

impl AnchorModel {
    pub fn new(anchors: Vec<Point>, bandwidth: f64, scale: f64) -> Result<Self> {
        let Some(first) = anchors.first() else {
            return Err(Error::InvalidParameter("an anchor model needs at least one anchor".into()));
        };
        let dim = first.len();
        if dim == 0 {
            return Err(Error::InvalidParameter("anchors must have at least one coordinate".into()));
        }
        if let Some(bad) = anchors.iter().find(|a| a.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        if anchors.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("anchor coordinates must be finite".into()));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {bandwidth}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise scale must be positive, got {scale}")));
        }
        Ok(Self {
            anchors,
            bandwidth,
            scale,
        })
    }

    pub fn with_bandwidth(&self, bandwidth: f64) -> Result<Self> {
        Self::new(self.anchors.clone(), bandwidth, self.scale)
    }

    pub fn anchors(&self) -> &[Point] {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.anchors[0].len()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// All anchors must lie in `domain`.
    pub fn check_inside(&self, domain: &BoxDomain) -> Result<()> {
        self.anchors.iter().try_for_each(|a| domain.check(a))
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        let h = self.bandwidth;
        let inv_h2 = 1.0 / (h * h);
        let norm = libm::pow(h, -(self.dim() as f64)) / self.anchors.len() as f64;
        let sum: f64 = self
            .anchors
            .iter()
            .map(|a| libm::exp(-0.5 * squared_distance(x, a) * inv_h2))
            .sum();
        norm * sum * libm::exp(-LN_SQRT_2PI)
    }

    /// Density at each query: `O(N·M)` for `N` anchors and `M` queries.
    pub fn densities(&self, queries: &[Point]) -> Vec<f64> {
        queries.iter().map(|q| self.density(q)).collect()
    }

    pub fn noise_variance(&self, x: &[f64]) -> f64 {
        self.scale * libm::exp(-self.density(x))
    }
}

impl NoiseModel for AnchorModel {
    fn noise_variance(&self, x: &[f64]) -> f64 {
        AnchorModel::noise_variance(self, x)
    }
}

pub fn kde_density(x: &[f64], model: &AnchorModel) -> f64 {
    model.density(x)
}

pub fn noise_variance(x: &[f64], model: &AnchorModel) -> f64 {
    model.noise_variance(x)
}

/// Negative mean leave-one-out log density, `−(1/n) Σ log p̂(x₀ | h, X₀∖{x₀})`.
///
/// `X₀∖{x₀}` is a set difference: every copy of `x₀` is held out, so
/// repeating the whole anchor set leaves the objective unchanged. Evaluated
/// with log-sum-exp so that small bandwidths stay finite. Returns NaN when
/// some anchor has no distinct partner.
pub fn loo_objective(anchors: &[Point], bandwidth: f64) -> f64 {
    let n = anchors.len();
    if n < 2 {
        return f64::NAN;
    }
    let d = anchors[0].len() as f64;
    let inv_h2 = 1.0 / (bandwidth * bandwidth);
    let log_kernel_norm = -d * libm::log(bandwidth) - LN_SQRT_2PI;
    let mut exps: Vec<f64> = Vec::with_capacity(n - 1);
    let mut total = 0.0;
    for xi in anchors {
        exps.clear();
        exps.extend(
            anchors
                .iter()
                .filter(|xj| *xj != xi)
                .map(|xj| -0.5 * squared_distance(xi, xj) * inv_h2),
        );
        if exps.is_empty() {
            return f64::NAN;
        }
        let m = exps.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
        let lse = m + libm::log(exps.iter().map(|e| libm::exp(e - m)).sum::<f64>());
        total += log_kernel_norm - libm::log(exps.len() as f64) + lse;
    }
    -total / n as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct BandwidthFit {
    pub bandwidth: f64,
    pub objective: f64,
    pub probes: Vec<(f64, f64)>,
}

/// `[1e-3·diam, diam]` of the domain.
pub fn default_bandwidth_bounds(domain: &BoxDomain) -> (f64, f64) {
    let diam = domain.diameter();
    (1e-3 * diam, diam)
}

/// Leave-one-out bandwidth: 64-point log grid over `bounds` plus
/// golden-section refinement.
pub fn loo_bandwidth(anchors: &[Point], bounds: (f64, f64)) -> Result<BandwidthFit> {
    if anchors.len() < 2 {
        return Err(Error::TooFewAnchors(anchors.len()));
    }
    let first = &anchors[0];
    if anchors.iter().all(|a| a == first) {
        return Err(Error::DegenerateAnchors);
    }
    let fit = minimize_log_scalar(
        |h| Some(loo_objective(anchors, h)),
        bounds.0,
        bounds.1,
        LogGridSearch::default(),
    )
    .map_err(|e| match e {
        Error::SearchFailed => Error::DegenerateAnchors,
        e => e,
    })?;
    Ok(BandwidthFit {
        bandwidth: fit.x,
        objective: fit.value,
        probes: fit.probes,
    })
}
