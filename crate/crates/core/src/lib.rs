//! Heteroscedastic preferential Bayesian optimization.
//!
//! The engine learns a latent utility from pairwise duels whose outcomes are
//! corrupted by input-dependent judgment noise. The noise variance is estimated
//! from a handful of user-supplied *anchors* through kernel density estimation,
//! `σ̂²(x) = a·exp(−p̂(x))`, and risk-averse acquisition functions steer the next
//! duel toward designs that are both promising and easy to judge.
//!
//! The crate is `no_std` (it needs `alloc`); randomness is always injected as a
//! seedable [`rand_core::RngCore`] stream and no operation touches a clock or
//! the filesystem. File formats, the CLI and the live session service live in
//! the companion `hetpbo` crate.
//!
//! Module map:
//!
//! - [`math`]: dense PSD linear algebra, the Gaussian special functions,
//!   seeded samplers, the squared-exponential kernel and bounded 1-D/2-D search.
//! - [`kde`] and [`oracle`]: anchor KDE noise model, leave-one-out bandwidth,
//!   ground-truth uncertainty oracles; [`rates`] holds the Monte-Carlo checks of
//!   the estimator's convergence rate.
//! - [`preference`]: the heteroscedastic probit duel likelihood, Laplace/Newton
//!   MAP, evidence and hyperparameter fitting.
//! - [`inference`]: hallucination-believer posterior (truncated-MVN Gibbs) and
//!   the Laplace predictive.
//! - [`acquisition`]: EI, UCB, ANPEI, RAHBO and the duel proposal policy.
//! - [`benchmarks`], [`engine`], [`trial`]: synthetic problems, the simulated
//!   human, and the optimization loop shared by the harness and live sessions.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod acquisition;
pub mod benchmarks;
pub mod engine;
mod error;
pub mod inference;
pub mod kde;
pub mod math;
pub mod oracle;
pub mod preference;
pub mod rates;
pub mod trial;

pub use error::{Error, Result};

/// A design: a point of the (box) input domain.
pub type Point = alloc::vec::Vec<f64>;
