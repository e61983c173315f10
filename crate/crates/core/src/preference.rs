//! Heteroscedastic probit duel likelihood and its Laplace approximation.
//!
//! Duel `k` between winner `x_k` and loser `x'_k` is won with probability
//! `Φ(z_k)`, `z_k = (f(x_k) − f(x'_k)) / √(σ̂²(x_k) + σ̂²(x'_k))`. The latent
//! vector `f` lives on the stacked endpoints `[x₁..x_m, x'₁..x'_m]` with GP
//! prior covariance `L`, and the negative log posterior is
//! `S(f) = −Σ ln Φ(z_k) + ½ fᵀL⁻¹f`.
//!
//! The Newton iteration works in the coordinates `f = L·a` so that `L` is
//! never inverted (duplicate endpoints are common: the previous winner is
//! reused every round). The curvature of the likelihood is `Λ = Dᵀ W D`,
//! where `D` maps `f` to pairwise differences and `W` is diagonal, so with
//! `R = W^{1/2} D` every solve goes through the `m×m` matrix `B = I + R L Rᵀ`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::OnceCell;

use crate::kde::{AnchorModel, NoiseModel};
use crate::math::search::{minimize_log_planar, minimize_log_scalar, LogGridSearch};
use crate::math::special::{inverse_mills_ratio, log_std_normal_cdf};
use crate::math::{dot, norm, BoxDomain, Cholesky, Matrix, SquaredExponential};
use crate::{Error, Point, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 50;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DuelRecord {
    pub winner: Point,
    pub loser: Point,
}

impl DuelRecord {
    pub fn new(winner: Point, loser: Point) -> Result<Self> {
        if winner.len() != loser.len() {
            return Err(Error::DimensionMismatch {
                expected: winner.len(),
                found: loser.len(),
            });
        }
        if winner == loser {
            return Err(Error::DegenerateDuel);
        }
        Ok(Self { winner, loser })
    }
}

/// Ordered duel history.
#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DuelDataset {
    duels: Vec<DuelRecord>,
}

impl DuelDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_duels(duels: Vec<DuelRecord>) -> Result<Self> {
        let mut ds = Self::new();
        for d in duels {
            ds.push(d)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, duel: DuelRecord) -> Result<()> {
        if let Some(first) = self.duels.first() {
            if first.winner.len() != duel.winner.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.winner.len(),
                    found: duel.winner.len(),
                });
            }
        }
        if duel.winner == duel.loser || duel.winner.len() != duel.loser.len() {
            return Err(Error::DegenerateDuel);
        }
        self.duels.push(duel);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.duels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.duels.is_empty()
    }

    pub fn duels(&self) -> &[DuelRecord] {
        &self.duels
    }

    pub fn dim(&self) -> Option<usize> {
        self.duels.first().map(|d| d.winner.len())
    }

    /// Winners first, then losers.
    pub fn stacked(&self) -> Vec<Point> {
        self.duels
            .iter()
            .map(|d| d.winner.clone())
            .chain(self.duels.iter().map(|d| d.loser.clone()))
            .collect()
    }

    pub fn check_inside(&self, domain: &BoxDomain) -> Result<()> {
        for d in &self.duels {
            domain.check(&d.winner)?;
            domain.check(&d.loser)?;
        }
        Ok(())
    }
}

/// `(f_w − f_l) / √(var_w + var_l)`.
#[inline]
pub fn duel_z(f_winner: f64, f_loser: f64, var_winner: f64, var_loser: f64) -> f64 {
    (f_winner - f_loser) / libm::sqrt(var_winner + var_loser)
}

/// A duel dataset bound to a kernel and a noise model.
/// Lower bound on the summed noise variance of a duel, relative to the signal
/// variance. The estimated noise underflows towards zero inside dense anchor
/// clusters, and a probit scale far below the latent scale leaves the Newton
/// iteration without a representable descent step.
pub const PAIR_VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct PreferenceProblem {
    points: Vec<Point>,
    m: usize,
    variances: Vec<f64>,
    pair_variances: Vec<f64>,
    kernel: SquaredExponential,
    gram: Matrix,
    gram_chol: OnceCell<Result<Cholesky>>,
}

struct Likelihood {
    log_lik: f64,
    /// Gradient of the log likelihood with respect to `f`.
    grad: Vec<f64>,
    /// Diagonal of `W`; `Λ = Dᵀ W D`.
    weights: Vec<f64>,
}

impl PreferenceProblem {
    pub fn new(dataset: &DuelDataset, kernel: &SquaredExponential, noise: &dyn NoiseModel) -> Result<Self> {
        let points = dataset.stacked();
        let variances: Vec<f64> = points.iter().map(|x| noise.noise_variance(x)).collect();
        Self::from_parts(points, variances, kernel)
    }

    /// `points` stacked winners-then-losers with their endpoint variances.
    pub fn from_parts(points: Vec<Point>, variances: Vec<f64>, kernel: &SquaredExponential) -> Result<Self> {
        if points.len() % 2 != 0 || points.len() != variances.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                found: variances.len(),
            });
        }
        if let Some(v) = variances.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!("endpoint noise variance must be non-negative, got {v}")));
        }
        let m = points.len() / 2;
        let floor = PAIR_VARIANCE_FLOOR * kernel.signal_variance();
        let pair_variances = (0..m).map(|k| (variances[k] + variances[m + k]).max(floor)).collect();
        let gram = kernel.gram(&points);
        Ok(Self {
            points,
            m,
            variances,
            pair_variances,
            kernel: kernel.clone(),
            gram,
            gram_chol: OnceCell::new(),
        })
    }

    pub fn num_duels(&self) -> usize {
        self.m
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// `σ̂²(x_k) + σ̂²(x'_k)` per duel.
    pub fn pair_variances(&self) -> &[f64] {
        &self.pair_variances
    }

    pub fn kernel(&self) -> &SquaredExponential {
        &self.kernel
    }

    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    fn gram_cholesky(&self) -> Result<&Cholesky> {
        self.gram_chol
            .get_or_init(|| Cholesky::new(&self.gram))
            .as_ref()
            .map_err(Clone::clone)
    }

    pub fn duel_z(&self, k: usize, f: &[f64]) -> f64 {
        (f[k] - f[self.m + k]) / libm::sqrt(self.pair_variances[k])
    }

    fn likelihood(&self, f: &[f64]) -> Likelihood {
        let m = self.m;
        let mut grad = vec![0.0; 2 * m];
        let mut weights = vec![0.0; m];
        let mut log_lik = 0.0;
        for k in 0..m {
            let s = self.pair_variances[k];
            let sd = libm::sqrt(s);
            let z = (f[k] - f[m + k]) / sd;
            let r = inverse_mills_ratio(z);
            log_lik += log_std_normal_cdf(z);
            grad[k] = r / sd;
            grad[m + k] = -r / sd;
            weights[k] = ((r * (r + z)) / s).max(0.0);
        }
        Likelihood { log_lik, grad, weights }
    }

    pub fn log_likelihood(&self, f: &[f64]) -> f64 {
        (0..self.m).map(|k| log_std_normal_cdf(self.duel_z(k, f))).sum()
    }

    /// `S(f) = −Σ ln Φ(z_k) + ½ fᵀL⁻¹f`.
    pub fn neg_log_posterior(&self, f: &[f64]) -> Result<f64> {
        self.check_len(f)?;
        let chol = self.gram_cholesky()?;
        let y = chol.solve_lower(f);
        Ok(-self.log_likelihood(f) + 0.5 * dot(&y, &y))
    }

    /// Gradient and Hessian of `S` at `f`.
    pub fn grad_and_hessian(&self, f: &[f64]) -> Result<(Vec<f64>, Matrix)> {
        self.check_len(f)?;
        let chol = self.gram_cholesky()?;
        let lik = self.likelihood(f);
        let prior = chol.solve(f);
        let grad = prior.iter().zip(&lik.grad).map(|(p, g)| p - g).collect();
        let mut hess = chol.inverse();
        hess.symmetrize();
        Ok((grad, hess.add(&self.lambda(&lik.weights))))
    }

    /// `Λ = Dᵀ diag(w) D`.
    pub fn lambda(&self, weights: &[f64]) -> Matrix {
        let m = self.m;
        let mut lam = Matrix::zeros(2 * m, 2 * m);
        for (k, w) in weights.iter().enumerate() {
            lam[(k, k)] += w;
            lam[(m + k, m + k)] += w;
            lam[(k, m + k)] -= w;
            lam[(m + k, k)] -= w;
        }
        lam
    }

    fn check_len(&self, f: &[f64]) -> Result<()> {
        if f.len() != 2 * self.m {
            return Err(Error::DimensionMismatch {
                expected: 2 * self.m,
                found: f.len(),
            });
        }
        Ok(())
    }

    /// Objective in `a` coordinates; returns `(Ψ, f, likelihood)`.
    fn psi(&self, a: &[f64]) -> (f64, Vec<f64>, Likelihood) {
        let f = self.gram.matvec(a);
        let lik = self.likelihood(&f);
        (-lik.log_lik + 0.5 * dot(a, &f), f, lik)
    }

    /// Damped Newton iteration for `f_MAP`.
    pub fn fit_map(&self, tol: f64, max_iter: usize) -> Result<LaplaceFit> {
        let m = self.m;
        let n = 2 * m;
        let mut a = vec![0.0; n];
        let (mut obj, mut f, mut lik) = self.psi(&a);
        let mut iterations = 0;
        let mut grad_norm = gradient_norm(&a, &lik.grad);
        let mut converged = grad_norm <= tol * (1.0 + norm(&f));
        while !converged && iterations < max_iter {
            iterations += 1;
            let sqrt_w: Vec<f64> = lik.weights.iter().map(|w| libm::sqrt(*w)).collect();
            let b_chol = self.b_cholesky(&sqrt_w)?;
            // b = Λf + ∇ln p(y|f)
            let lf = apply_d(m, &f);
            let mut b = apply_dt(m, &lf.iter().zip(&lik.weights).map(|(d, w)| d * w).collect::<Vec<_>>());
            for (bi, gi) in b.iter_mut().zip(&lik.grad) {
                *bi += gi;
            }
            let lb = self.gram.matvec(&b);
            let rlb = apply_r(m, &sqrt_w, &lb);
            let c = b_chol.solve(&rlb);
            let correction = apply_rt(m, &sqrt_w, &c);
            let a_new: Vec<f64> = b.iter().zip(&correction).map(|(b, c)| b - c).collect();
            let step: Vec<f64> = a_new.iter().zip(&a).map(|(n, o)| n - o).collect();

            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..=MAX_HALVINGS {
                let trial: Vec<f64> = a.iter().zip(&step).map(|(a, s)| a + t * s).collect();
                let (o, f_t, l_t) = self.psi(&trial);
                if o < obj {
                    accepted = Some((trial, o, f_t, l_t));
                    break;
                }
                t *= 0.5;
            }
            let Some((a_t, o, f_t, l_t)) = accepted else {
                return Err(Error::LineSearchFailed {
                    iteration: iterations,
                    objective: obj,
                    grad_norm,
                });
            };
            a = a_t;
            obj = o;
            f = f_t;
            lik = l_t;
            grad_norm = gradient_norm(&a, &lik.grad);
            converged = grad_norm <= tol * (1.0 + norm(&f));
        }
        let sqrt_w: Vec<f64> = lik.weights.iter().map(|w| libm::sqrt(*w)).collect();
        let b_chol = self.b_cholesky(&sqrt_w)?;
        Ok(LaplaceFit {
            points: self.points.clone(),
            kernel: self.kernel.clone(),
            f_map: f,
            alpha: a,
            weights: lik.weights,
            sqrt_weights: sqrt_w,
            b_chol,
            converged,
            grad_norm,
            iterations,
            objective: obj,
        })
    }

    /// `B = I + R L Rᵀ`.
    fn b_matrix(&self, sqrt_w: &[f64]) -> Matrix {
        let m = self.m;
        let l = &self.gram;
        Matrix::from_fn(m, m, |i, j| {
            let v = l[(i, j)] - l[(i, m + j)] - l[(m + i, j)] + l[(m + i, m + j)];
            let mut v = sqrt_w[i] * sqrt_w[j] * v;
            if i == j {
                v += 1.0;
            }
            v
        })
    }

    fn b_cholesky(&self, sqrt_w: &[f64]) -> Result<Cholesky> {
        let mut b = self.b_matrix(sqrt_w);
        b.symmetrize();
        Cholesky::new(&b)
    }

    /// Laplace log evidence `−S(f_MAP) − ½ ln det(I + LΛ)`; zero for an empty
    /// dataset.
    pub fn log_evidence(&self, fit: &LaplaceFit) -> Result<f64> {
        if self.m == 0 {
            return Ok(0.0);
        }
        let b = self.b_matrix(&fit.sqrt_weights);
        let chol = Cholesky::new(&b).map_err(|_| Error::IndefiniteEvidence {
            min_eigenvalue: crate::math::symmetric_eigenvalues(&b)
                .into_iter()
                .fold(f64::INFINITY, f64::min),
        })?;
        Ok(-fit.objective - 0.5 * chol.log_det())
    }
}

fn gradient_norm(a: &[f64], grad_loglik: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(grad_loglik).map(|(a, g)| (a - g) * (a - g)).sum())
}

/// `D f`: pairwise differences `f_k − f_{m+k}`.
fn apply_d(m: usize, f: &[f64]) -> Vec<f64> {
    (0..m).map(|k| f[k] - f[m + k]).collect()
}

fn apply_dt(m: usize, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; 2 * m];
    for k in 0..m {
        out[k] = u[k];
        out[m + k] = -u[k];
    }
    out
}

pub(crate) fn apply_r(m: usize, sqrt_w: &[f64], f: &[f64]) -> Vec<f64> {
    (0..m).map(|k| sqrt_w[k] * (f[k] - f[m + k])).collect()
}

pub(crate) fn apply_rt(m: usize, sqrt_w: &[f64], u: &[f64]) -> Vec<f64> {
    let scaled: Vec<f64> = u.iter().zip(sqrt_w).map(|(u, s)| u * s).collect();
    apply_dt(m, &scaled)
}

/// Laplace approximation around `f_MAP`.
#[derive(Clone, Debug)]
pub struct LaplaceFit {
    points: Vec<Point>,
    kernel: SquaredExponential,
    pub f_map: Vec<f64>,
    /// `L⁻¹ f_MAP`, computed without inverting `L`.
    pub alpha: Vec<f64>,
    pub weights: Vec<f64>,
    sqrt_weights: Vec<f64>,
    b_chol: Cholesky,
    pub converged: bool,
    pub grad_norm: f64,
    pub iterations: usize,
    /// `S(f_MAP)`.
    pub objective: f64,
}

impl LaplaceFit {
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn kernel(&self) -> &SquaredExponential {
        &self.kernel
    }

    pub fn num_duels(&self) -> usize {
        self.weights.len()
    }

    /// `Λ_MAP` as a dense `2m × 2m` matrix.
    pub fn lambda_map(&self) -> Matrix {
        let m = self.num_duels();
        let mut lam = Matrix::zeros(2 * m, 2 * m);
        for (k, w) in self.weights.iter().enumerate() {
            lam[(k, k)] += w;
            lam[(m + k, m + k)] += w;
            lam[(k, m + k)] -= w;
            lam[(m + k, k)] -= w;
        }
        lam
    }

    pub(crate) fn sqrt_weights(&self) -> &[f64] {
        &self.sqrt_weights
    }

    /// Cholesky factor of `B = I + R L Rᵀ`.
    pub(crate) fn b_cholesky(&self) -> &Cholesky {
        &self.b_chol
    }
}

pub fn fit_map(
    dataset: &DuelDataset,
    kernel: &SquaredExponential,
    noise: &dyn NoiseModel,
    tol: f64,
    max_iter: usize,
) -> Result<LaplaceFit> {
    PreferenceProblem::new(dataset, kernel, noise)?.fit_map(tol, max_iter)
}

pub fn log_evidence(
    dataset: &DuelDataset,
    kernel: &SquaredExponential,
    noise: &dyn NoiseModel,
) -> Result<f64> {
    let problem = PreferenceProblem::new(dataset, kernel, noise)?;
    let fit = problem.fit_map(DEFAULT_TOLERANCE, DEFAULT_MAX_ITER)?;
    problem.log_evidence(&fit)
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SurrogateHyperparams {
    pub lengthscale: f64,
    /// Present when the bandwidth was fitted jointly with the lengthscale.
    pub bandwidth: Option<f64>,
    /// Noise scale `a`, supplied by the user and never fitted.
    pub scale: f64,
    /// Negative log evidence at the optimum.
    pub objective: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HyperMode {
    Lengthscale,
    Joint { bandwidth_bounds: (f64, f64) },
}

/// Negative log evidence as a function of the lengthscale, `None` where the
/// fit fails.
fn neg_evidence(
    dataset: &DuelDataset,
    kernel: &SquaredExponential,
    noise: &dyn NoiseModel,
    lengthscale: f64,
) -> Option<f64> {
    let k = kernel.with_lengthscale(lengthscale);
    let problem = PreferenceProblem::new(dataset, &k, noise).ok()?;
    let fit = problem.fit_map(DEFAULT_TOLERANCE, DEFAULT_MAX_ITER).ok()?;
    problem.log_evidence(&fit).ok().map(|e| -e)
}

/// Lengthscale minimizing the negative Laplace evidence.
pub fn fit_lengthscale(
    dataset: &DuelDataset,
    kernel: &SquaredExponential,
    noise: &dyn NoiseModel,
    bounds: (f64, f64),
    search: LogGridSearch,
) -> Result<(f64, f64)> {
    if dataset.len() < 2 {
        return Err(Error::InvalidParameter("hyperparameter fitting needs at least 2 duels".into()));
    }
    let best = minimize_log_scalar(|l| neg_evidence(dataset, kernel, noise, l), bounds.0, bounds.1, search)?;
    Ok((best.x, best.value))
}

/// Grid and refinement budget for the joint `(λ, h)` search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanarSearch {
    pub grid: usize,
    pub rounds: usize,
    pub refine_iters: usize,
}

impl Default for PlanarSearch {
    fn default() -> Self {
        Self {
            grid: 12,
            rounds: 2,
            refine_iters: 12,
        }
    }
}

pub fn fit_hyperparams(
    dataset: &DuelDataset,
    kernel: &SquaredExponential,
    noise: &AnchorModel,
    lengthscale_bounds: (f64, f64),
    mode: HyperMode,
    search: LogGridSearch,
    planar: PlanarSearch,
) -> Result<SurrogateHyperparams> {
    match mode {
        HyperMode::Lengthscale => {
            let (lengthscale, objective) = fit_lengthscale(dataset, kernel, noise, lengthscale_bounds, search)?;
            Ok(SurrogateHyperparams {
                lengthscale,
                bandwidth: None,
                scale: noise.scale(),
                objective,
            })
        }
        HyperMode::Joint { bandwidth_bounds } => {
            if dataset.len() < 2 {
                return Err(Error::InvalidParameter("hyperparameter fitting needs at least 2 duels".into()));
            }
            let best = minimize_log_planar(
                |l, h| {
                    let model = noise.with_bandwidth(h).ok()?;
                    neg_evidence(dataset, kernel, &model, l)
                },
                lengthscale_bounds,
                bandwidth_bounds,
                planar.grid,
                planar.rounds,
                planar.refine_iters,
            )?;
            Ok(SurrogateHyperparams {
                lengthscale: best.x,
                bandwidth: Some(best.y),
                scale: noise.scale(),
                objective: best.value,
            })
        }
    }
}
