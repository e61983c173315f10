//! A full simulated run: anchors and initial duels from the benchmark, then
//! `T` rounds of propose, ask the simulated human, record.
//!
//! Streams of the trial seed: 1 anchors, 2 initial pairs, 3 the simulated
//! human, `ENGINE_STREAM_BASE + t` round `t`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use crate::acquisition::uniform_pool;
use crate::benchmarks::{sample_anchors, BenchmarkSpec, SimulatedHuman};
use crate::engine::{Engine, EngineConfig};
use crate::math::sampling::stream;
use crate::{Error, Point, Result};

const ANCHOR_STREAM: u64 = 1;
const INITIAL_STREAM: u64 = 2;
const HUMAN_STREAM: u64 = 3;

/// A risk weight `ρ`, either absolute or as a multiple of `|f(x_max)|`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RhoSpec {
    Absolute(f64),
    FmaxMultiple(f64),
}

impl RhoSpec {
    pub fn value(&self, spec: &BenchmarkSpec) -> f64 {
        match *self {
            RhoSpec::Absolute(v) => v,
            RhoSpec::FmaxMultiple(k) => k * libm::fabs(spec.f_max),
        }
    }

    /// Column suffix, e.g. `0` or `3fmax`.
    pub fn label(&self) -> String {
        match *self {
            RhoSpec::Absolute(v) => format!("{v}"),
            RhoSpec::FmaxMultiple(k) => format!("{k}fmax"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrialConfig {
    pub spec: BenchmarkSpec,
    pub engine: EngineConfig,
    pub n_anchors: usize,
    pub n_initial_duels: usize,
    pub iterations: usize,
    /// Risk weights reported in addition to `ρ = 0`.
    pub rhos: Vec<RhoSpec>,
}

impl TrialConfig {
    pub fn new(spec: BenchmarkSpec, engine: EngineConfig) -> Self {
        Self {
            spec,
            engine,
            n_anchors: 30,
            n_initial_duels: 5,
            iterations: 30,
            rhos: alloc::vec![RhoSpec::FmaxMultiple(3.0)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("iterations must be at least 1".into()));
        }
        if self.n_anchors == 0 || self.n_initial_duels == 0 {
            return Err(Error::InvalidParameter("anchor and initial duel counts must be at least 1".into()));
        }
        if self.rhos.iter().any(|r| !r.value(&self.spec).is_finite()) {
            return Err(Error::InvalidParameter("rho values must be finite".into()));
        }
        self.engine.validate()
    }

    /// `ρ = 0` followed by the configured weights.
    pub fn rho_values(&self) -> Vec<f64> {
        core::iter::once(0.0).chain(self.rhos.iter().map(|r| r.value(&self.spec))).collect()
    }
}

/// One round's record; the regret vectors follow [`TrialConfig::rho_values`].
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub challenger: Point,
    pub reference: Point,
    pub challenger_won: bool,
    /// Latent utility at the challenger.
    pub f: f64,
    pub sigma2_true: f64,
    pub sigma2_hat: f64,
    pub mv: Vec<f64>,
    pub simple_regret: Vec<f64>,
    pub cum_regret: Vec<f64>,
    pub lengthscale: f64,
    pub bandwidth: f64,
    pub wall_ms: u64,
}

/// Stepwise trial so that callers can time or interleave rounds.
pub struct Trial {
    config: TrialConfig,
    engine: Engine,
    human: SimulatedHuman<ChaCha8Rng>,
    rhos: Vec<f64>,
    mv_max: Vec<f64>,
    cum: Vec<f64>,
    previous_winner: Option<Point>,
    round: usize,
}

impl Trial {
    pub fn new(config: TrialConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let spec = &config.spec;
        let anchors = sample_anchors(spec, config.n_anchors, &mut stream(seed, ANCHOR_STREAM))?;
        let mut engine = Engine::new(spec.domain.clone(), anchors, spec.noise_scale(), config.engine.clone(), seed)?;
        let mut human = SimulatedHuman::new(spec.clone(), stream(seed, HUMAN_STREAM));
        let mut init_rng = stream(seed, INITIAL_STREAM);
        for _ in 0..config.n_initial_duels {
            let pair = uniform_pool(&spec.domain, 2, &mut init_rng);
            engine.add_duel(human.answer_duel(&pair[0], &pair[1])?)?;
        }
        let rhos = config.rho_values();
        let mv_max = rhos.iter().map(|r| spec.mv(&spec.x_max, *r)).collect();
        Ok(Self {
            cum: alloc::vec![0.0; rhos.len()],
            rhos,
            mv_max,
            engine,
            human,
            config,
            previous_winner: None,
            round: 0,
        })
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn config(&self) -> &TrialConfig {
        &self.config
    }

    pub fn is_finished(&self) -> bool {
        self.round >= self.config.iterations
    }

    pub fn step(&mut self) -> Result<TraceRow> {
        let round = self.round + 1;
        let out = self.engine.step(self.previous_winner.as_deref(), round as u64)?;
        let challenger = out.proposal.challenger;
        let reference = out.proposal.reference;
        let duel = self.human.answer_duel(&challenger, &reference)?;
        let challenger_won = duel.winner == challenger;
        self.previous_winner = Some(duel.winner.clone());
        self.engine.add_duel(duel)?;
        self.round = round;

        let spec = &self.config.spec;
        let mv: Vec<f64> = self.rhos.iter().map(|r| spec.mv(&challenger, *r)).collect();
        let simple: Vec<f64> = self.mv_max.iter().zip(&mv).map(|(m, v)| m - v).collect();
        for (c, s) in self.cum.iter_mut().zip(&simple) {
            *c += s;
        }
        Ok(TraceRow {
            iteration: round,
            f: spec.latent(&challenger),
            sigma2_true: spec.true_noise_variance(&challenger),
            sigma2_hat: self.engine.noise().noise_variance(&challenger),
            challenger,
            reference,
            challenger_won,
            mv,
            simple_regret: simple,
            cum_regret: self.cum.clone(),
            lengthscale: out.lengthscale,
            bandwidth: out.bandwidth,
            wall_ms: 0,
        })
    }
}

#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub rows: Vec<TraceRow>,
    /// Set when a round failed; `rows` then holds the partial trace.
    pub aborted: Option<Error>,
}

impl TrialOutcome {
    pub fn is_complete(&self) -> bool {
        self.aborted.is_none()
    }
}

/// Runs every round; a failing round ends the trial with a partial trace.
/// Setup errors (invalid config, bad oracle placement) are returned directly.
pub fn run_trial(config: &TrialConfig, seed: u64) -> Result<TrialOutcome> {
    let mut trial = Trial::new(config.clone(), seed)?;
    let mut rows = Vec::with_capacity(config.iterations);
    while !trial.is_finished() {
        match trial.step() {
            Ok(row) => rows.push(row),
            Err(e) => {
                return Ok(TrialOutcome { rows, aborted: Some(e) });
            }
        }
    }
    Ok(TrialOutcome { rows, aborted: None })
}
