//! One round of the optimization loop: refit hyperparameters on the answered
//! duels, draw a hallucination, build the posterior and propose the next duel.
//!
//! The engine holds no randomness of its own. Round `t` draws from stream
//! `ENGINE_STREAM_BASE + t` of the session seed, so the simulated harness and
//! a live session that see the same duels propose the same pairs.

use alloc::string::String;
use alloc::vec::Vec;

use crate::acquisition::{incumbent, propose_duel, AcqConfig, DuelProposal};
use crate::inference::{
    duel_covariance, gibbs_hallucinate, GibbsSettings, HbPosterior, LaplacePosterior, LatentPosterior,
    PredictiveNoise,
};
use crate::kde::{default_bandwidth_bounds, loo_bandwidth, AnchorModel, NoiseModel};
use crate::math::sampling::stream;
use crate::math::search::LogGridSearch;
use crate::math::{BoxDomain, RbfKernelParams, SquaredExponential};
use crate::preference::{
    fit_hyperparams, DuelDataset, DuelRecord, HyperMode, PlanarSearch, PreferenceProblem, DEFAULT_MAX_ITER,
    DEFAULT_TOLERANCE,
};
use crate::{Error, Point, Result};

pub const ENGINE_STREAM_BASE: u64 = 1 << 32;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Backend {
    #[default]
    Hb,
    Laplace,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BandwidthMode {
    /// Leave-one-out on the anchors, once.
    #[default]
    Loo,
    /// Jointly with the lengthscale by Laplace evidence, every refit.
    Evidence,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct EngineConfig {
    pub backend: Backend,
    pub bandwidth: BandwidthMode,
    /// Lengthscale bounds in unit-cube coordinates of the domain.
    pub lengthscale_bounds: (f64, f64),
    /// Lengthscale used before the first refit (and always, when refitting is
    /// disabled).
    pub initial_lengthscale: f64,
    pub refit: bool,
    pub signal_variance: f64,
    pub gibbs: GibbsSettings,
    pub predictive_noise: PredictiveNoise,
    pub acquisition: AcqConfig,
    pub lengthscale_grid: usize,
    pub lengthscale_refine: usize,
    pub joint_grid: usize,
    /// Bandwidth with fewer than two anchors, as a fraction of the domain
    /// diameter.
    pub fallback_bandwidth_fraction: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Hb,
            bandwidth: BandwidthMode::Loo,
            lengthscale_bounds: (0.02, 2.0),
            initial_lengthscale: 0.2,
            refit: true,
            signal_variance: 1.0,
            gibbs: GibbsSettings::default(),
            predictive_noise: PredictiveNoise::Latent,
            acquisition: AcqConfig::default(),
            lengthscale_grid: 24,
            lengthscale_refine: 20,
            joint_grid: 12,
            fallback_bandwidth_fraction: 0.1,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.lengthscale_bounds;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidParameter(String::from("lengthscale bounds must satisfy 0 < lo <= hi")));
        }
        RbfKernelParams::new(self.initial_lengthscale, self.signal_variance)?;
        if let BandwidthMode::Fixed(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidParameter(String::from("fixed bandwidth must be positive")));
            }
        }
        if !(self.fallback_bandwidth_fraction > 0.0) {
            return Err(Error::InvalidParameter(String::from("fallback bandwidth fraction must be positive")));
        }
        self.acquisition.validate()
    }
}

/// Fitted surrogate for one round.
#[derive(Clone, Debug)]
pub enum Surrogate {
    Hb(HbPosterior),
    Laplace(LaplacePosterior),
}

impl LatentPosterior for Surrogate {
    fn predict(&self, x: &[f64]) -> (f64, f64) {
        match self {
            Surrogate::Hb(p) => p.predict(x),
            Surrogate::Laplace(p) => p.predict(x),
        }
    }
}

/// Latent posterior with the test-point noise added.
struct WithNoise<'a> {
    inner: &'a dyn LatentPosterior,
    noise: &'a dyn NoiseModel,
}

impl LatentPosterior for WithNoise<'_> {
    fn predict(&self, x: &[f64]) -> (f64, f64) {
        let (m, v) = self.inner.predict(x);
        (m, v + self.noise.noise_variance(x))
    }
}

#[derive(Clone, Debug)]
pub struct Round {
    pub proposal: DuelProposal,
    pub surrogate: Surrogate,
    pub lengthscale: f64,
    pub bandwidth: f64,
    pub incumbent: Point,
    pub incumbent_mean: f64,
    pub hallucination: Option<Vec<f64>>,
    pub saturations: usize,
}

#[derive(Clone, Debug)]
pub struct Engine {
    domain: BoxDomain,
    config: EngineConfig,
    noise: AnchorModel,
    dataset: DuelDataset,
    lengthscale: f64,
    seed: u64,
}

impl Engine {
    /// Fixes the bandwidth from the anchors according to the configured mode.
    pub fn new(domain: BoxDomain, anchors: Vec<Point>, scale: f64, config: EngineConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let bandwidth = initial_bandwidth(&domain, &anchors, &config)?;
        let noise = AnchorModel::new(anchors, bandwidth, scale)?;
        noise.check_inside(&domain)?;
        Ok(Self {
            lengthscale: config.initial_lengthscale,
            domain,
            config,
            noise,
            dataset: DuelDataset::new(),
            seed,
        })
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn noise(&self) -> &AnchorModel {
        &self.noise
    }

    pub fn dataset(&self) -> &DuelDataset {
        &self.dataset
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn kernel(&self) -> SquaredExponential {
        SquaredExponential::normalized(
            RbfKernelParams {
                lengthscale: self.lengthscale,
                signal_variance: self.config.signal_variance,
            },
            &self.domain,
        )
    }

    pub fn add_duel(&mut self, duel: DuelRecord) -> Result<()> {
        self.domain.check(&duel.winner)?;
        self.domain.check(&duel.loser)?;
        self.dataset.push(duel)
    }

    /// Distinct duel endpoints in order of first appearance.
    pub fn queried_points(&self) -> Vec<Point> {
        let mut out: Vec<Point> = Vec::new();
        for d in self.dataset.duels() {
            for x in [&d.winner, &d.loser] {
                if !out.contains(x) {
                    out.push(x.clone());
                }
            }
        }
        out
    }

    /// Restores hyperparameters recorded from an earlier round.
    pub fn set_hyperparameters(&mut self, lengthscale: f64, bandwidth: f64) -> Result<()> {
        if !(lengthscale > 0.0 && lengthscale.is_finite()) {
            return Err(Error::InvalidParameter(String::from("lengthscale must be positive and finite")));
        }
        self.noise = self.noise.with_bandwidth(bandwidth)?;
        self.lengthscale = lengthscale;
        Ok(())
    }

    /// Refits the lengthscale (and bandwidth in evidence mode) on the answered
    /// duels. A no-op with fewer than two duels.
    pub fn refit(&mut self) -> Result<()> {
        if !self.config.refit || self.dataset.len() < 2 {
            return Ok(());
        }
        let mode = match self.config.bandwidth {
            BandwidthMode::Evidence => HyperMode::Joint {
                bandwidth_bounds: default_bandwidth_bounds(&self.domain),
            },
            _ => HyperMode::Lengthscale,
        };
        let hp = fit_hyperparams(
            &self.dataset,
            &self.kernel(),
            &self.noise,
            self.config.lengthscale_bounds,
            mode,
            LogGridSearch {
                grid: self.config.lengthscale_grid,
                refine_iters: self.config.lengthscale_refine,
            },
            PlanarSearch {
                grid: self.config.joint_grid,
                ..PlanarSearch::default()
            },
        )?;
        self.lengthscale = hp.lengthscale;
        if let Some(h) = hp.bandwidth {
            self.noise = self.noise.with_bandwidth(h)?;
        }
        Ok(())
    }

    /// Posterior under the current hyperparameters. The hallucination backend
    /// draws from `rng`.
    pub fn surrogate<R: rand_core::RngCore + ?Sized>(&self, rng: &mut R) -> Result<(Surrogate, Option<Vec<f64>>, usize)> {
        let kernel = self.kernel();
        match self.config.backend {
            Backend::Hb => {
                let sigma = duel_covariance(&self.dataset, &kernel, &self.noise);
                if self.dataset.is_empty() {
                    let p = HbPosterior::from_covariance(&self.dataset, &kernel, &sigma, &[])?;
                    return Ok((Surrogate::Hb(p), Some(Vec::new()), 0));
                }
                let sample = gibbs_hallucinate(&sigma, self.config.gibbs, rng)?;
                let p = HbPosterior::from_covariance(&self.dataset, &kernel, &sigma, &sample.values)?;
                Ok((Surrogate::Hb(p), Some(sample.values), sample.saturations))
            }
            Backend::Laplace => Ok((Surrogate::Laplace(self.laplace()?), None, 0)),
        }
    }

    /// Laplace posterior under the current hyperparameters.
    pub fn laplace(&self) -> Result<LaplacePosterior> {
        let problem = PreferenceProblem::new(&self.dataset, &self.kernel(), &self.noise)?;
        Ok(LaplacePosterior::new(problem.fit_map(DEFAULT_TOLERANCE, DEFAULT_MAX_ITER)?))
    }

    /// One round: refit, hallucinate, propose. `reference` is the previous
    /// winner; without one, the best winner of the recorded duels by
    /// posterior mean is used.
    pub fn step(&mut self, reference: Option<&[f64]>, round: u64) -> Result<Round> {
        if self.dataset.is_empty() {
            return Err(Error::EmptyHistory);
        }
        self.refit()?;
        let mut rng = stream(self.seed, ENGINE_STREAM_BASE + round);
        let (surrogate, hallucination, saturations) = self.surrogate(&mut rng)?;
        let queried = self.queried_points();
        let (inc_idx, incumbent_mean) = incumbent(&surrogate, &queried)?;
        let reference: Point = match reference {
            Some(r) => r.to_vec(),
            None => {
                let winners: Vec<Point> = self.dataset.duels().iter().map(|d| d.winner.clone()).collect();
                let (i, _) = incumbent(&surrogate, &winners)?;
                winners[i].clone()
            }
        };
        let observed;
        let posterior: &dyn LatentPosterior = match self.config.predictive_noise {
            PredictiveNoise::Latent => &surrogate,
            PredictiveNoise::Observed => {
                observed = WithNoise {
                    inner: &surrogate,
                    noise: &self.noise,
                };
                &observed
            }
        };
        let proposal = propose_duel(
            posterior,
            &self.noise,
            &self.domain,
            &reference,
            incumbent_mean,
            &self.config.acquisition,
            &mut rng,
        )?;
        Ok(Round {
            proposal,
            lengthscale: self.lengthscale,
            bandwidth: self.noise.bandwidth(),
            incumbent: queried[inc_idx].clone(),
            incumbent_mean,
            surrogate,
            hallucination,
            saturations,
        })
    }
}

/// Bandwidth the engine starts from: the fixed value, else leave-one-out on
/// the anchors, falling back to a fraction of the domain diameter when fewer
/// than two distinct anchors exist.
pub fn initial_bandwidth(domain: &BoxDomain, anchors: &[Point], config: &EngineConfig) -> Result<f64> {
    let fallback = config.fallback_bandwidth_fraction * domain.diameter();
    match config.bandwidth {
        BandwidthMode::Fixed(h) => Ok(h),
        _ if anchors.len() < 2 => Ok(fallback),
        _ => match loo_bandwidth(anchors, default_bandwidth_bounds(domain)) {
            Ok(fit) => Ok(fit.bandwidth),
            Err(Error::DegenerateAnchors) => Ok(fallback),
            Err(e) => Err(e),
        },
    }
}
