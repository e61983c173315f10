//! Acquisition functions and the duel proposal policy.
//!
//! EI and UCB are risk neutral. ANPEI subtracts `γ·σ̂` (the estimated noise
//! standard deviation) from EI; RAHBO is `µ + η·σ_f − γ·σ̂²`. The challenger
//! maximizes the acquisition over a uniform candidate pool followed by a
//! coordinate search from the best few candidates; the reference is always
//! the previous winner.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand_core::RngCore;

use crate::inference::LatentPosterior;
use crate::kde::NoiseModel;
use crate::math::sampling::unit_open;
use crate::math::special::{std_normal_cdf, std_normal_pdf};
use crate::math::BoxDomain;
use crate::{Error, Point, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AcqKind {
    Ei,
    Ucb,
    Anpei,
    Rahbo,
}

impl AcqKind {
    pub const ALL: [AcqKind; 4] = [AcqKind::Ei, AcqKind::Ucb, AcqKind::Anpei, AcqKind::Rahbo];

    pub fn name(&self) -> &'static str {
        match self {
            AcqKind::Ei => "ei",
            AcqKind::Ucb => "ucb",
            AcqKind::Anpei => "anpei",
            AcqKind::Rahbo => "rahbo",
        }
    }

    pub fn is_risk_averse(&self) -> bool {
        matches!(self, AcqKind::Anpei | AcqKind::Rahbo)
    }

    /// The risk-neutral counterpart (identity for EI and UCB).
    pub fn baseline(&self) -> AcqKind {
        match self {
            AcqKind::Anpei => AcqKind::Ei,
            AcqKind::Rahbo => AcqKind::Ucb,
            k => *k,
        }
    }
}

impl fmt::Display for AcqKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AcqKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ei" => Ok(AcqKind::Ei),
            "ucb" => Ok(AcqKind::Ucb),
            "anpei" => Ok(AcqKind::Anpei),
            "rahbo" => Ok(AcqKind::Rahbo),
            other => Err(Error::InvalidParameter(format!("unknown acquisition kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct AcqConfig {
    pub kind: AcqKind,
    pub gamma: f64,
    pub eta: f64,
    /// Candidates per input dimension.
    pub pool_per_dim: usize,
    /// Overrides `pool_per_dim · d` when set.
    pub pool_size: Option<usize>,
    pub refine_top: usize,
    pub refine_steps: usize,
}

impl Default for AcqConfig {
    fn default() -> Self {
        Self {
            kind: AcqKind::Ei,
            gamma: 1.0,
            eta: 2.0,
            pool_per_dim: 1024,
            pool_size: None,
            refine_top: 8,
            refine_steps: 50,
        }
    }
}

impl AcqConfig {
    pub fn with_kind(kind: AcqKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn pool(&self, dim: usize) -> usize {
        self.pool_size.unwrap_or(self.pool_per_dim * dim)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0 && self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::InvalidParameter(String::from("gamma and eta must be finite and non-negative")));
        }
        if self.pool_size == Some(0) || (self.pool_size.is_none() && self.pool_per_dim == 0) {
            return Err(Error::InvalidParameter(String::from("candidate pool must not be empty")));
        }
        Ok(())
    }
}

/// `E[(f − best)₊]` for `f ~ N(mean, sd²)`.
pub fn expected_improvement(mean: f64, sd: f64, best: f64) -> f64 {
    if !(sd > 0.0) {
        return (mean - best).max(0.0);
    }
    let z = (mean - best) / sd;
    (sd * (z * std_normal_cdf(z) + std_normal_pdf(z))).max(0.0)
}

/// Acquisition value from the latent posterior moments at `x`, the estimated
/// noise variance there and the incumbent mean.
pub fn acq_value(mean: f64, sd: f64, noise_variance: f64, incumbent_mean: f64, cfg: &AcqConfig) -> f64 {
    match cfg.kind {
        AcqKind::Ei => expected_improvement(mean, sd, incumbent_mean),
        AcqKind::Anpei => expected_improvement(mean, sd, incumbent_mean) - cfg.gamma * libm::sqrt(noise_variance),
        AcqKind::Ucb => mean + cfg.eta * sd,
        AcqKind::Rahbo => mean + cfg.eta * sd - cfg.gamma * noise_variance,
    }
}

/// Index and posterior mean of the queried point with the highest mean; the
/// earliest wins ties.
pub fn incumbent(posterior: &dyn LatentPosterior, history: &[Point]) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, x) in history.iter().enumerate() {
        let m = posterior.mean(x);
        if best.is_none_or(|(_, b)| m > b) {
            best = Some((i, m));
        }
    }
    best.ok_or(Error::EmptyHistory)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DuelProposal {
    pub challenger: Point,
    pub reference: Point,
    pub value: f64,
}

/// Acquisition surface at fixed posterior, noise model and incumbent.
pub struct Acquisition<'a> {
    pub posterior: &'a dyn LatentPosterior,
    pub noise: &'a dyn NoiseModel,
    pub incumbent_mean: f64,
    pub config: &'a AcqConfig,
}

impl Acquisition<'_> {
    pub fn value(&self, x: &[f64]) -> f64 {
        let (mean, var) = self.posterior.predict(x);
        acq_value(mean, libm::sqrt(var), self.noise.noise_variance(x), self.incumbent_mean, self.config)
    }

    /// Best point among `pool` (first wins ties), refined by coordinate
    /// search from the top candidates. Points equal to `exclude` are skipped.
    pub fn maximize(&self, pool: &[Point], domain: &BoxDomain, exclude: Option<&[f64]>) -> Option<(Point, f64)> {
        let mut scored: Vec<(usize, f64)> = pool
            .iter()
            .enumerate()
            .filter(|(_, x)| exclude.is_none_or(|e| x.as_slice() != e))
            .map(|(i, x)| (i, self.value(x)))
            .map(|(i, v)| (i, if v.is_nan() { f64::NEG_INFINITY } else { v }))
            .collect();
        if scored.is_empty() {
            return None;
        }
        // stable sort keeps pool order among equal values
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        let mut best = (pool[scored[0].0].clone(), scored[0].1);
        for &(i, v) in scored.iter().take(self.config.refine_top) {
            let (x, v) = self.coordinate_search(pool[i].clone(), v, domain, exclude);
            if v > best.1 {
                best = (x, v);
            }
        }
        Some(best)
    }

    fn coordinate_search(&self, mut x: Point, mut v: f64, domain: &BoxDomain, exclude: Option<&[f64]>) -> (Point, f64) {
        let ranges = domain.ranges();
        let mut radius = 0.1;
        for _ in 0..self.config.refine_steps {
            let mut improved = false;
            for axis in 0..x.len() {
                for sign in [1.0, -1.0] {
                    let mut y = x.clone();
                    y[axis] = (y[axis] + sign * radius * ranges[axis])
                        .clamp(domain.lower()[axis], domain.upper()[axis]);
                    if y == x || exclude.is_some_and(|e| y.as_slice() == e) {
                        continue;
                    }
                    let vy = self.value(&y);
                    if vy > v {
                        x = y;
                        v = vy;
                        improved = true;
                    }
                }
            }
            if !improved {
                radius *= 0.5;
            }
        }
        (x, v)
    }
}

/// Uniform candidate pool.
pub fn uniform_pool<R: RngCore + ?Sized>(domain: &BoxDomain, size: usize, rng: &mut R) -> Vec<Point> {
    (0..size)
        .map(|_| {
            let u: Vec<f64> = (0..domain.dim()).map(|_| unit_open(rng)).collect();
            domain.from_unit(&u)
        })
        .collect()
}

/// Challenger maximizing the acquisition; the reference is `previous_winner`.
pub fn propose_duel<R: RngCore + ?Sized>(
    posterior: &dyn LatentPosterior,
    noise: &dyn NoiseModel,
    domain: &BoxDomain,
    previous_winner: &[f64],
    incumbent_mean: f64,
    cfg: &AcqConfig,
    rng: &mut R,
) -> Result<DuelProposal> {
    cfg.validate()?;
    let pool = uniform_pool(domain, cfg.pool(domain.dim()), rng);
    let acq = Acquisition {
        posterior,
        noise,
        incumbent_mean,
        config: cfg,
    };
    let (challenger, value) = acq
        .maximize(&pool, domain, Some(previous_winner))
        .ok_or_else(|| Error::InvalidParameter(String::from("no admissible candidate")))?;
    Ok(DuelProposal {
        challenger,
        reference: previous_winner.to_vec(),
        value,
    })
}
