//! Synthetic latent utilities, their ground-truth uncertainty oracles and the
//! simulated human that answers duels.
//!
//! Every utility is maximized. Branin is negated; Hartmann4 is used in the
//! form `(1.1 − Σᵢ αᵢ exp(−Σⱼ Aᵢⱼ (xⱼ − Pᵢⱼ))) / 0.839`, which increases in
//! every coordinate and therefore peaks at the corner `(1, 1, 1, 1)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use rand_core::RngCore;

use crate::math::sampling::std_normal;
use crate::math::BoxDomain;
use crate::oracle::{DensityFamily, TrueUncertaintyOracle};
use crate::preference::DuelRecord;
use crate::{Error, Point, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BenchmarkFunction {
    Sine1d,
    Branin2d,
    Hartmann4d,
}

impl BenchmarkFunction {
    pub fn name(&self) -> &'static str {
        match self {
            BenchmarkFunction::Sine1d => "sine1d",
            BenchmarkFunction::Branin2d => "branin2d",
            BenchmarkFunction::Hartmann4d => "hartmann4d",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            BenchmarkFunction::Sine1d => 1,
            BenchmarkFunction::Branin2d => 2,
            BenchmarkFunction::Hartmann4d => 4,
        }
    }

    pub fn domain(&self) -> BoxDomain {
        let (lo, hi) = match self {
            BenchmarkFunction::Sine1d => (vec![0.0], vec![2.0]),
            BenchmarkFunction::Branin2d => (vec![-5.0, 0.0], vec![10.0, 15.0]),
            BenchmarkFunction::Hartmann4d => (vec![0.0; 4], vec![1.0; 4]),
        };
        BoxDomain::new(lo, hi).expect("static benchmark domain")
    }

    /// Evaluates without a domain check.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            BenchmarkFunction::Sine1d => libm::sin(2.0 * PI * x[0]),
            BenchmarkFunction::Branin2d => -branin(x),
            BenchmarkFunction::Hartmann4d => hartmann4(x),
        }
    }
}

impl fmt::Display for BenchmarkFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchmarkFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sine1d" => Ok(BenchmarkFunction::Sine1d),
            "branin2d" => Ok(BenchmarkFunction::Branin2d),
            "hartmann4d" => Ok(BenchmarkFunction::Hartmann4d),
            other => Err(Error::InvalidParameter(format!("unknown benchmark {other:?}"))),
        }
    }
}

/// Standard Branin (minimization form).
pub fn branin(x: &[f64]) -> f64 {
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    let q = x[1] - b * x[0] * x[0] + c * x[0] - 6.0;
    q * q + 10.0 * (1.0 - t) * libm::cos(x[0]) + 10.0
}

const H4_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const H4_A: [[f64; 4]; 4] = [
    [10.0, 3.0, 17.0, 3.5],
    [0.05, 10.0, 17.0, 0.1],
    [3.0, 3.5, 1.7, 10.0],
    [17.0, 8.0, 0.05, 10.0],
];
const H4_P: [[f64; 4]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124],
    [0.2329, 0.4135, 0.8307, 0.3736],
    [0.2348, 0.1451, 0.3522, 0.2883],
    [0.4047, 0.8828, 0.8732, 0.5743],
];

pub fn hartmann4(x: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..4 {
        let inner: f64 = (0..4).map(|j| H4_A[i][j] * (x[j] - H4_P[i][j])).sum();
        s += H4_ALPHA[i] * libm::exp(-inner);
    }
    (1.1 - s) / 0.839
}

/// Latent utility with a domain check.
pub fn latent_f(function: BenchmarkFunction, x: &[f64]) -> Result<f64> {
    function.domain().check(x)?;
    Ok(function.eval(x))
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BenchmarkSpec {
    pub function: BenchmarkFunction,
    pub domain: BoxDomain,
    pub x_max: Point,
    pub f_max: f64,
    /// Ground-truth uncertainty; its noise scale is the experiment's `a`.
    pub oracle: TrueUncertaintyOracle,
}

impl BenchmarkSpec {
    pub fn new(function: BenchmarkFunction, oracle: TrueUncertaintyOracle) -> Result<Self> {
        let domain = function.domain();
        if oracle.dim() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                found: oracle.dim(),
            });
        }
        let x_max = match function {
            BenchmarkFunction::Sine1d => vec![0.25],
            BenchmarkFunction::Branin2d => vec![PI, 2.275],
            BenchmarkFunction::Hartmann4d => vec![1.0; 4],
        };
        Ok(Self {
            function,
            f_max: function.eval(&x_max),
            domain,
            x_max,
            oracle,
        })
    }

    /// `N(0.25, 0.125²)` oracle, `a = 0.1`.
    pub fn sine1d() -> Self {
        Self::new(BenchmarkFunction::Sine1d, Self::default_oracle(BenchmarkFunction::Sine1d, DensityFamily::Gaussian))
            .expect("valid default")
    }

    /// Oracle centered on the optimum `(π, 2.275)` with per-axis sd of 10% of
    /// the axis range, `a = 1`.
    pub fn branin2d() -> Self {
        Self::new(
            BenchmarkFunction::Branin2d,
            Self::default_oracle(BenchmarkFunction::Branin2d, DensityFamily::Gaussian),
        )
        .expect("valid default")
    }

    /// Oracle centered at the middle of the cube, distance 1 from the optimum,
    /// per-axis sd 0.15, `a = 2`.
    pub fn hartmann4d() -> Self {
        Self::new(
            BenchmarkFunction::Hartmann4d,
            Self::default_oracle(BenchmarkFunction::Hartmann4d, DensityFamily::Gaussian),
        )
        .expect("valid default")
    }

    pub fn default_for(function: BenchmarkFunction) -> Self {
        match function {
            BenchmarkFunction::Sine1d => Self::sine1d(),
            BenchmarkFunction::Branin2d => Self::branin2d(),
            BenchmarkFunction::Hartmann4d => Self::hartmann4d(),
        }
    }

    /// Default oracle placement for a function and density family.
    pub fn default_oracle(function: BenchmarkFunction, family: DensityFamily) -> TrueUncertaintyOracle {
        let (center, scale, a) = match function {
            BenchmarkFunction::Sine1d => (vec![0.25], vec![0.125], 0.1),
            BenchmarkFunction::Branin2d => (vec![PI, 2.275], vec![1.5, 1.5], 1.0),
            BenchmarkFunction::Hartmann4d => (vec![0.5; 4], vec![0.15; 4], 2.0),
        };
        TrueUncertaintyOracle::new(family, center, scale, a).expect("valid default oracle")
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn noise_scale(&self) -> f64 {
        self.oracle.noise_scale()
    }

    pub fn latent(&self, x: &[f64]) -> f64 {
        self.function.eval(x)
    }

    pub fn true_noise_variance(&self, x: &[f64]) -> f64 {
        self.oracle.noise_variance(x)
    }

    /// `f(x) − ρ·σ²(x)` with the true variance.
    pub fn mv(&self, x: &[f64], rho: f64) -> f64 {
        self.latent(x) - rho * self.true_noise_variance(x)
    }
}

pub fn true_noise_variance(spec: &BenchmarkSpec, x: &[f64]) -> Result<f64> {
    spec.domain.check(x)?;
    Ok(spec.true_noise_variance(x))
}

pub fn mv_objective(spec: &BenchmarkSpec, x: &[f64], rho: f64) -> Result<f64> {
    spec.domain.check(x)?;
    Ok(spec.mv(x, rho))
}

/// I.i.d. oracle draws kept only when inside the domain. Fails once more than
/// `100·n` draws have been spent, i.e. when acceptance falls below 1%.
pub fn sample_anchors<R: RngCore + ?Sized>(spec: &BenchmarkSpec, n: usize, rng: &mut R) -> Result<Vec<Point>> {
    if n == 0 {
        return Err(Error::InvalidParameter("anchor count must be at least 1".into()));
    }
    let budget = 100 * n;
    let mut out = Vec::with_capacity(n);
    let mut draws = 0;
    while out.len() < n {
        if draws >= budget {
            return Err(Error::OracleRejection {
                rate: out.len() as f64 / draws as f64,
            });
        }
        draws += 1;
        let x = spec.oracle.sample(rng);
        if spec.domain.contains(&x) {
            out.push(x);
        }
    }
    Ok(out)
}

/// Answers duels with `f(x) + ε(x)` against `f(x') + ε(x')`, drawing both
/// noises from the true oracle variance.
#[derive(Clone, Debug)]
pub struct SimulatedHuman<R> {
    spec: BenchmarkSpec,
    rng: R,
}

impl<R: RngCore> SimulatedHuman<R> {
    pub fn new(spec: BenchmarkSpec, rng: R) -> Self {
        Self { spec, rng }
    }

    pub fn spec(&self) -> &BenchmarkSpec {
        &self.spec
    }

    /// True when `x` beats `y`; exact ties go to `x`.
    pub fn prefers(&mut self, x: &[f64], y: &[f64]) -> bool {
        let ex = libm::sqrt(self.spec.true_noise_variance(x)) * std_normal(&mut self.rng);
        let ey = libm::sqrt(self.spec.true_noise_variance(y)) * std_normal(&mut self.rng);
        self.spec.latent(x) + ex >= self.spec.latent(y) + ey
    }

    pub fn answer_duel(&mut self, x: &[f64], y: &[f64]) -> Result<DuelRecord> {
        if self.prefers(x, y) {
            DuelRecord::new(x.to_vec(), y.to_vec())
        } else {
            DuelRecord::new(y.to_vec(), x.to_vec())
        }
    }
}
