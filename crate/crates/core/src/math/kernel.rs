use alloc::format;
use alloc::vec::Vec;

use super::linalg::Matrix;
use crate::{Error, Point, Result};

/// Axis-aligned box `[lower, upper]`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidDomain("domain needs at least one dimension".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::InvalidDomain(format!(
                "lower has {} entries, upper has {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::InvalidDomain(format!("axis {i}: need finite lower < upper, got [{l}, {u}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn unit(dim: usize) -> Self {
        Self {
            lower: alloc::vec![0.0; dim],
            upper: alloc::vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn ranges(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).collect()
    }

    pub fn diameter(&self) -> f64 {
        libm::sqrt(self.ranges().iter().map(|r| r * r).sum())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| v.is_finite() && *v >= *l && *v <= *u)
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        if !self.contains(x) {
            return Err(Error::OutOfDomain);
        }
        Ok(())
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }

    /// Map a point of `[0,1]^d` into the box.
    pub fn from_unit(&self, u: &[f64]) -> Point {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(t, (l, h))| l + t * (h - l))
            .collect()
    }

    pub fn to_unit(&self, x: &[f64]) -> Point {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, h))| (v - l) / (h - l))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RbfKernelParams {
    pub lengthscale: f64,
    pub signal_variance: f64,
}

impl RbfKernelParams {
    pub fn new(lengthscale: f64, signal_variance: f64) -> Result<Self> {
        if !(lengthscale > 0.0 && lengthscale.is_finite()) {
            return Err(Error::InvalidParameter(format!("lengthscale must be positive, got {lengthscale}")));
        }
        if !(signal_variance > 0.0 && signal_variance.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "signal variance must be positive, got {signal_variance}"
            )));
        }
        Ok(Self {
            lengthscale,
            signal_variance,
        })
    }
}

/// `signal_variance · exp(−‖x − y‖² / (2λ²))`.
pub fn rbf_kernel(x: &[f64], y: &[f64], params: &RbfKernelParams) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(params.signal_variance * libm::exp(-0.5 * d2 / (params.lengthscale * params.lengthscale)))
}

/// Squared-exponential kernel, optionally measuring distances in unit-cube
/// coordinates of a domain (so the lengthscale is domain-relative).
#[derive(Clone, Debug, PartialEq)]
pub struct SquaredExponential {
    params: RbfKernelParams,
    /// Per-axis multiplier applied to coordinate differences.
    inv_ranges: Option<Vec<f64>>,
}

impl SquaredExponential {
    pub fn new(params: RbfKernelParams) -> Self {
        Self {
            params,
            inv_ranges: None,
        }
    }

    pub fn normalized(params: RbfKernelParams, domain: &BoxDomain) -> Self {
        Self {
            params,
            inv_ranges: Some(domain.ranges().iter().map(|r| 1.0 / r).collect()),
        }
    }

    pub fn params(&self) -> &RbfKernelParams {
        &self.params
    }

    pub fn with_lengthscale(&self, lengthscale: f64) -> Self {
        let mut k = self.clone();
        k.params.lengthscale = lengthscale;
        k
    }

    pub fn signal_variance(&self) -> f64 {
        self.params.signal_variance
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        let d2: f64 = match &self.inv_ranges {
            None => x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum(),
            Some(s) => x
                .iter()
                .zip(y)
                .zip(s)
                .map(|((a, b), s)| {
                    let t = (a - b) * s;
                    t * t
                })
                .sum(),
        };
        let l = self.params.lengthscale;
        self.params.signal_variance * libm::exp(-0.5 * d2 / (l * l))
    }

    pub fn gram(&self, points: &[Point]) -> Matrix {
        let n = points.len();
        let mut k = Matrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = self.params.signal_variance;
            for j in 0..i {
                let v = self.eval(&points[i], &points[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    pub fn cross(&self, a: &[Point], b: &[Point]) -> Matrix {
        Matrix::from_fn(a.len(), b.len(), |i, j| self.eval(&a[i], &b[j]))
    }
}
