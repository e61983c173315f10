//! Session state machine. Every change is an [`Event`]; live operations
//! compute the event, the caller persists it, then [`Session::apply`] updates
//! the state. Replaying a session's log through `apply` rebuilds it exactly.

use std::time::{SystemTime, UNIX_EPOCH};

use hetpbo_core::acquisition::{incumbent, AcqConfig, Acquisition};
use hetpbo_core::engine::{initial_bandwidth, Engine, EngineConfig};
use hetpbo_core::inference::LatentPosterior;
use hetpbo_core::kde::AnchorModel;
use hetpbo_core::math::sampling::halton;
use hetpbo_core::math::BoxDomain;
use hetpbo_core::preference::DuelRecord;
use hetpbo_core::Point;
use serde::{Deserialize, Serialize};

use crate::trace;

/// Answered duels needed before the acquisition function takes over from the
/// quasi-random cold-start sequence.
pub const COLD_START_DUELS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    CollectingAnchors,
    Active,
    Closed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WinnerTag {
    Challenger,
    Reference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub challenger: Point,
    pub reference: Point,
    pub cold_start: bool,
    pub lengthscale: f64,
    pub bandwidth: f64,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created {
        id: String,
        lower: Vec<f64>,
        upper: Vec<f64>,
        noise_scale: f64,
        config: EngineConfig,
        seed: u64,
        at_ms: u64,
    },
    AnchorsAdded {
        points: Vec<Point>,
        at_ms: u64,
    },
    Frozen {
        at_ms: u64,
    },
    DuelProposed {
        proposal: Proposal,
        at_ms: u64,
    },
    DuelAnswered {
        winner: WinnerTag,
        at_ms: u64,
    },
    Closed {
        at_ms: u64,
    },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Conflict(String),
    #[error("session is closed")]
    Gone,
    #[error("points outside the domain or of the wrong dimension at indices {0:?}")]
    OutOfDomain(Vec<usize>),
    #[error("engine failure: {0}")]
    Engine(#[from] hetpbo_core::Error),
    #[error("corrupt event log: {0}")]
    Corrupt(String),
}

pub type SessionResult<T> = Result<T, SessionError>;

/// One answered duel, kept for the trace export.
#[derive(Clone, Debug, PartialEq)]
pub struct AnsweredRound {
    pub proposal: Proposal,
    pub challenger_won: bool,
}

#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub domain: BoxDomain,
    pub noise_scale: f64,
    pub config: EngineConfig,
    pub seed: u64,
    pub status: Status,
    anchors: Vec<Point>,
    bandwidth: f64,
    engine: Option<Engine>,
    pub pending: Option<Proposal>,
    pub rounds: Vec<AnsweredRound>,
    pub created_ms: u64,
    pub updated_ms: u64,
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CreateRequest {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub noise_scale: f64,
    #[serde(default)]
    pub acquisition: Option<AcqConfig>,
    #[serde(default)]
    pub engine: Option<EngineConfig>,
    #[serde(default)]
    pub seed: u64,
}

impl CreateRequest {
    /// Validates the request and builds the creation event.
    pub fn into_event(self, id: String) -> SessionResult<Event> {
        BoxDomain::new(self.lower.clone(), self.upper.clone())
            .map_err(|e| SessionError::BadRequest(e.to_string()))?;
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return Err(SessionError::BadRequest("noise_scale must be positive and finite".into()));
        }
        let mut config = self.engine.unwrap_or_default();
        if let Some(a) = self.acquisition {
            config.acquisition = a;
        }
        config.validate().map_err(|e| SessionError::BadRequest(e.to_string()))?;
        Ok(Event::Created {
            id,
            lower: self.lower,
            upper: self.upper,
            noise_scale: self.noise_scale,
            config,
            seed: self.seed,
            at_ms: now_ms(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub x: Point,
    pub mean: f64,
    pub sigma2_hat: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceSummary {
    pub iteration: usize,
    pub incumbent: PointSummary,
    pub challenger: PointSummary,
    pub reference: PointSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub x: Point,
    pub mean: f64,
    pub sd: f64,
    pub sigma2_hat: f64,
    pub acquisition: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub rows: Vec<GridRow>,
    pub incumbent: Option<PointSummary>,
    pub pending: Option<Proposal>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub status: Status,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub noise_scale: f64,
    pub seed: u64,
    pub n_anchors: usize,
    pub bandwidth: f64,
    pub n_duels: usize,
    pub pending: Option<Proposal>,
    pub created_ms: u64,
    pub updated_ms: u64,
}

impl Session {
    /// Builds a session from its first event.
    pub fn from_created(event: &Event) -> SessionResult<Self> {
        let Event::Created { id, lower, upper, noise_scale, config, seed, at_ms } = event else {
            return Err(SessionError::Corrupt("log does not start with a creation event".into()));
        };
        let domain = BoxDomain::new(lower.clone(), upper.clone())?;
        let bandwidth = initial_bandwidth(&domain, &[], config)?;
        Ok(Self {
            id: id.clone(),
            domain,
            noise_scale: *noise_scale,
            config: config.clone(),
            seed: *seed,
            status: Status::CollectingAnchors,
            anchors: Vec::new(),
            bandwidth,
            engine: None,
            pending: None,
            rounds: Vec::new(),
            created_ms: *at_ms,
            updated_ms: *at_ms,
        })
    }

    pub fn replay(events: &[Event]) -> SessionResult<Self> {
        let first = events.first().ok_or_else(|| SessionError::Corrupt("empty event log".into()))?;
        let mut s = Self::from_created(first)?;
        for e in &events[1..] {
            s.apply(e)?;
        }
        Ok(s)
    }

    pub fn anchors(&self) -> &[Point] {
        &self.anchors
    }

    pub fn bandwidth(&self) -> f64 {
        self.engine.as_ref().map_or(self.bandwidth, |e| e.noise().bandwidth())
    }

    pub fn engine(&self) -> Option<&Engine> {
        self.engine.as_ref()
    }

    pub fn n_duels(&self) -> usize {
        self.rounds.len()
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            id: self.id.clone(),
            status: self.status,
            lower: self.domain.lower().to_vec(),
            upper: self.domain.upper().to_vec(),
            noise_scale: self.noise_scale,
            seed: self.seed,
            n_anchors: self.anchors.len(),
            bandwidth: self.bandwidth(),
            n_duels: self.n_duels(),
            pending: self.pending.clone(),
            created_ms: self.created_ms,
            updated_ms: self.updated_ms,
        }
    }

    fn require_open(&self) -> SessionResult<()> {
        if self.status == Status::Closed {
            return Err(SessionError::Gone);
        }
        Ok(())
    }

    fn require_active(&self) -> SessionResult<&Engine> {
        self.require_open()?;
        match (&self.status, &self.engine) {
            (Status::Active, Some(e)) => Ok(e),
            _ => Err(SessionError::Conflict("session is still collecting anchors; freeze it first".into())),
        }
    }

    /// Applies an already validated event.
    pub fn apply(&mut self, event: &Event) -> SessionResult<()> {
        match event {
            Event::Created { .. } => return Err(SessionError::Corrupt("duplicate creation event".into())),
            Event::AnchorsAdded { points, at_ms } => {
                self.anchors.extend(points.iter().cloned());
                self.bandwidth = initial_bandwidth(&self.domain, &self.anchors, &self.config)?;
                self.updated_ms = *at_ms;
            }
            Event::Frozen { at_ms } => {
                let engine = Engine::new(
                    self.domain.clone(),
                    self.anchors.clone(),
                    self.noise_scale,
                    self.config.clone(),
                    self.seed,
                )?;
                self.engine = Some(engine);
                self.status = Status::Active;
                self.updated_ms = *at_ms;
            }
            Event::DuelProposed { proposal, at_ms } => {
                let engine = self.engine.as_mut().ok_or_else(|| SessionError::Corrupt("proposal before freeze".into()))?;
                engine.set_hyperparameters(proposal.lengthscale, proposal.bandwidth)?;
                self.pending = Some(proposal.clone());
                self.updated_ms = *at_ms;
            }
            Event::DuelAnswered { winner, at_ms } => {
                let proposal =
                    self.pending.take().ok_or_else(|| SessionError::Corrupt("answer without a proposal".into()))?;
                let engine = self.engine.as_mut().ok_or_else(|| SessionError::Corrupt("answer before freeze".into()))?;
                let (w, l) = match winner {
                    WinnerTag::Challenger => (&proposal.challenger, &proposal.reference),
                    WinnerTag::Reference => (&proposal.reference, &proposal.challenger),
                };
                engine.add_duel(DuelRecord::new(w.clone(), l.clone())?)?;
                self.rounds.push(AnsweredRound { challenger_won: *winner == WinnerTag::Challenger, proposal });
                self.updated_ms = *at_ms;
            }
            Event::Closed { at_ms } => {
                self.status = Status::Closed;
                self.pending = None;
                self.updated_ms = *at_ms;
            }
        }
        Ok(())
    }

    pub fn add_anchors(&self, points: Vec<Point>) -> SessionResult<Option<Event>> {
        self.require_open()?;
        if self.status != Status::CollectingAnchors {
            return Err(SessionError::Conflict("anchors are frozen".into()));
        }
        let offenders: Vec<usize> = points
            .iter()
            .enumerate()
            .filter(|(_, p)| p.len() != self.domain.dim() || !self.domain.contains(p))
            .map(|(i, _)| i)
            .collect();
        if !offenders.is_empty() {
            return Err(SessionError::OutOfDomain(offenders));
        }
        if points.is_empty() {
            return Ok(None);
        }
        Ok(Some(Event::AnchorsAdded { points, at_ms: now_ms() }))
    }

    pub fn freeze(&self) -> SessionResult<Event> {
        self.require_open()?;
        if self.status != Status::CollectingAnchors {
            return Err(SessionError::Conflict("session is already active".into()));
        }
        if self.anchors.is_empty() {
            return Err(SessionError::Conflict("at least one anchor is needed before freezing".into()));
        }
        // surface engine construction errors before anything is persisted
        Engine::new(self.domain.clone(), self.anchors.clone(), self.noise_scale, self.config.clone(), self.seed)?;
        Ok(Event::Frozen { at_ms: now_ms() })
    }

    /// Computes the next pair. The engine is cloned so that a failure leaves
    /// the session untouched.
    pub fn next_duel(&self) -> SessionResult<Event> {
        let engine = self.require_active()?;
        if self.pending.is_some() {
            return Err(SessionError::Conflict("a duel is already pending; answer it first".into()));
        }
        let start = std::time::Instant::now();
        let n = self.rounds.len();
        let proposal = if n < COLD_START_DUELS {
            let k = 2 * n as u64;
            Proposal {
                challenger: self.domain.from_unit(&halton(k + 1, self.domain.dim())),
                reference: self.domain.from_unit(&halton(k + 2, self.domain.dim())),
                cold_start: true,
                lengthscale: engine.lengthscale(),
                bandwidth: engine.noise().bandwidth(),
                wall_ms: 0,
            }
        } else {
            let mut engine = engine.clone();
            let last = &self.rounds[n - 1];
            let winner =
                if last.challenger_won { last.proposal.challenger.clone() } else { last.proposal.reference.clone() };
            let round = engine.step(Some(&winner), n as u64)?;
            Proposal {
                challenger: round.proposal.challenger,
                reference: round.proposal.reference,
                cold_start: false,
                lengthscale: round.lengthscale,
                bandwidth: round.bandwidth,
                wall_ms: 0,
            }
        };
        Ok(Event::DuelProposed {
            proposal: Proposal { wall_ms: start.elapsed().as_millis() as u64, ..proposal },
            at_ms: now_ms(),
        })
    }

    pub fn answer(&self, winner: WinnerTag) -> SessionResult<Event> {
        self.require_active()?;
        if self.pending.is_none() {
            return Err(SessionError::Conflict("no duel is pending".into()));
        }
        Ok(Event::DuelAnswered { winner, at_ms: now_ms() })
    }

    pub fn close(&self) -> SessionResult<Event> {
        self.require_open()?;
        Ok(Event::Closed { at_ms: now_ms() })
    }

    fn point_summary(&self, posterior: &dyn LatentPosterior, noise: &AnchorModel, x: &[f64]) -> PointSummary {
        PointSummary { x: x.to_vec(), mean: posterior.mean(x), sigma2_hat: noise.noise_variance(x) }
    }

    /// Incumbent and both endpoints of the last answered duel under the
    /// current Laplace posterior.
    pub fn preference_summary(&self) -> SessionResult<PreferenceSummary> {
        let engine = self.require_active()?;
        let last = self.rounds.last().ok_or_else(|| SessionError::Conflict("no duel answered yet".into()))?;
        let post = engine.laplace()?;
        let (i, _) = incumbent(&post, &engine.queried_points())?;
        let inc = engine.queried_points()[i].clone();
        Ok(PreferenceSummary {
            iteration: self.rounds.len(),
            incumbent: self.point_summary(&post, engine.noise(), &inc),
            challenger: self.point_summary(&post, engine.noise(), &last.proposal.challenger),
            reference: self.point_summary(&post, engine.noise(), &last.proposal.reference),
        })
    }

    /// Laplace posterior, noise estimate and acquisition value on the first
    /// `grid` points of a Halton sequence over the domain.
    pub fn posterior_summary(&self, grid: usize) -> SessionResult<PosteriorSummary> {
        let engine = self.require_active()?;
        if grid == 0 || grid > 100_000 {
            return Err(SessionError::BadRequest("grid must be between 1 and 100000".into()));
        }
        let post = engine.laplace()?;
        let queried = engine.queried_points();
        let inc = incumbent(&post, &queried).ok().map(|(i, _)| self.point_summary(&post, engine.noise(), &queried[i]));
        let acq = Acquisition {
            posterior: &post,
            noise: engine.noise(),
            incumbent_mean: inc.as_ref().map_or(0.0, |p| p.mean),
            config: &engine.config().acquisition,
        };
        let rows = (1..=grid as u64)
            .map(|i| {
                let x = self.domain.from_unit(&halton(i, self.domain.dim()));
                let (mean, var) = post.predict(&x);
                GridRow { sd: var.max(0.0).sqrt(), mean, sigma2_hat: engine.noise().noise_variance(&x), acquisition: acq.value(&x), x }
            })
            .collect();
        Ok(PosteriorSummary { rows, incumbent: inc, pending: self.pending.clone() })
    }

    /// Answered duels in the harness trace layout. Ground-truth columns are
    /// left empty.
    pub fn trace_csv(&self) -> crate::Result<String> {
        let d = self.domain.dim();
        let labels = vec![String::from("0")];
        let header = trace::header(d, &labels);
        let noise = self.engine.as_ref().map(|e| e.noise());
        let records: Vec<Vec<String>> = self
            .rounds
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let p = &r.proposal;
                let mut rec = vec![(i + 1).to_string()];
                rec.extend(p.challenger.iter().map(|v| v.to_string()));
                rec.extend(p.reference.iter().map(|v| v.to_string()));
                rec.push(if r.challenger_won { "1" } else { "0" }.into());
                rec.push(String::new());
                rec.push(String::new());
                rec.push(noise.map_or(String::new(), |n| n.noise_variance(&p.challenger).to_string()));
                rec.extend([String::new(), String::new(), String::new()]);
                rec.extend([p.lengthscale.to_string(), p.bandwidth.to_string(), p.wall_ms.to_string()]);
                rec
            })
            .collect();
        trace::to_csv_string(&header, &records)
    }
}
