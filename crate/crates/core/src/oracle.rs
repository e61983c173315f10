//! Ground-truth user uncertainty for synthetic experiments: an analytic
//! density `p(x)` and the induced variance `σ²(x) = a·exp(−p(x))`.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand_core::RngCore;

use crate::kde::NoiseModel;
use crate::math::sampling::{std_normal, student_t, uniform};
use crate::{Error, Point, Result};

/// Multivariate families are products of per-axis univariate densities.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "family", rename_all = "snake_case"))]
pub enum DensityFamily {
    Gaussian,
    StudentT { dof: f64 },
    /// Constant density on `center ± scale`.
    Uniform,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrueUncertaintyOracle {
    family: DensityFamily,
    center: Point,
    /// Per-axis scale: standard deviation (Gaussian), t scale, or half-width.
    scale: Vec<f64>,
    noise_scale: f64,
}

impl TrueUncertaintyOracle {
    pub fn new(family: DensityFamily, center: Point, scale: Vec<f64>, noise_scale: f64) -> Result<Self> {
        if center.is_empty() || center.len() != scale.len() {
            return Err(Error::DimensionMismatch {
                expected: center.len(),
                found: scale.len(),
            });
        }
        if scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("oracle center must be finite and scales positive".into()));
        }
        if let DensityFamily::StudentT { dof } = family {
            if !(dof >= 3.0) {
                return Err(Error::InvalidParameter(format!("student-t oracle needs dof >= 3, got {dof}")));
            }
        }
        if !(noise_scale > 0.0 && noise_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise scale must be positive, got {noise_scale}")));
        }
        Ok(Self {
            family,
            center,
            scale,
            noise_scale,
        })
    }

    pub fn gaussian(center: Point, sd: Vec<f64>, noise_scale: f64) -> Result<Self> {
        Self::new(DensityFamily::Gaussian, center, sd, noise_scale)
    }

    pub fn family(&self) -> DensityFamily {
        self.family
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn with_noise_scale(&self, noise_scale: f64) -> Result<Self> {
        Self::new(self.family, self.center.clone(), self.scale.clone(), noise_scale)
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        let mut p = 1.0;
        for ((v, c), s) in x.iter().zip(&self.center).zip(&self.scale) {
            let t = (v - c) / s;
            p *= match self.family {
                DensityFamily::Gaussian => libm::exp(-0.5 * t * t) / (s * libm::sqrt(2.0 * PI)),
                DensityFamily::StudentT { dof } => {
                    let log_norm = libm::lgamma(0.5 * (dof + 1.0))
                        - libm::lgamma(0.5 * dof)
                        - 0.5 * libm::log(dof * PI);
                    libm::exp(log_norm - 0.5 * (dof + 1.0) * libm::log1p(t * t / dof)) / s
                }
                DensityFamily::Uniform => {
                    if libm::fabs(t) <= 1.0 {
                        0.5 / s
                    } else {
                        0.0
                    }
                }
            };
        }
        p
    }

    pub fn noise_variance(&self, x: &[f64]) -> f64 {
        self.noise_scale * libm::exp(-self.density(x))
    }

    /// One i.i.d. draw from the density.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> Point {
        self.center
            .iter()
            .zip(&self.scale)
            .map(|(c, s)| {
                c + s * match self.family {
                    DensityFamily::Gaussian => std_normal(rng),
                    DensityFamily::StudentT { dof } => student_t(rng, dof),
                    DensityFamily::Uniform => uniform(rng, -1.0, 1.0),
                }
            })
            .collect()
    }
}

impl NoiseModel for TrueUncertaintyOracle {
    fn noise_variance(&self, x: &[f64]) -> f64 {
        TrueUncertaintyOracle::noise_variance(self, x)
    }
}
