//! Posterior prediction of the latent utility.
//!
//! The hallucination believer draws one realization `ṽ` of the duel
//! differences `v_k = f(x'_k) + ε(x'_k) − f(x_k) − ε(x_k)` from the prior
//! `N(0, Σ_vv)` truncated to `v < 0`, then conditions the GP on `v = ṽ`
//! exactly. The Laplace predictive is the usual Gaussian approximation around
//! `f_MAP` and serves as the alternative backend.

use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::kde::NoiseModel;
use crate::math::sampling::sample_truncated_normal_below_zero;
use crate::math::{dot, Cholesky, Matrix, SquaredExponential};
use crate::preference::{apply_r, DuelDataset, LaplaceFit};
use crate::{Error, Point, Result};

/// Joint covariance of `[f(X*); v]`, kept in blocks.
#[derive(Clone, Debug)]
pub struct JointCovariance {
    /// `Σ**`, `t × t`.
    pub test: Matrix,
    /// `Σ*v`, `t × m`.
    pub cross: Matrix,
    /// `Σvv`, `m × m`.
    pub duels: Matrix,
    /// Noise variance at each test point (the `V*` diagonal).
    pub test_noise: Vec<f64>,
}

impl JointCovariance {
    pub fn num_test(&self) -> usize {
        self.test.rows()
    }

    pub fn num_duels(&self) -> usize {
        self.duels.rows()
    }

    /// The full `(t+m) × (t+m)` matrix.
    pub fn assemble(&self) -> Matrix {
        let t = self.num_test();
        let m = self.num_duels();
        Matrix::from_fn(t + m, t + m, |i, j| match (i < t, j < t) {
            (true, true) => self.test[(i, j)],
            (true, false) => self.cross[(i, j - t)],
            (false, true) => self.cross[(j, i - t)],
            (false, false) => self.duels[(i - t, j - t)],
        })
    }
}

/// `k(x, x'_k) − k(x, x_k)` for every duel.
fn cross_row(x: &[f64], winners: &[Point], losers: &[Point], kernel: &SquaredExponential) -> Vec<f64> {
    winners
        .iter()
        .zip(losers)
        .map(|(w, l)| kernel.eval(x, l) - kernel.eval(x, w))
        .collect()
}

/// `Σvv = Cov(f(x'_j) − f(x_j), f(x'_k) − f(x_k)) + diag(σ̂²(x_k) + σ̂²(x'_k))`.
pub fn duel_covariance(dataset: &DuelDataset, kernel: &SquaredExponential, noise: &dyn NoiseModel) -> Matrix {
    let duels = dataset.duels();
    let m = duels.len();
    let mut s = Matrix::zeros(m, m);
    for j in 0..m {
        for k in 0..=j {
            let (wj, lj) = (&duels[j].winner, &duels[j].loser);
            let (wk, lk) = (&duels[k].winner, &duels[k].loser);
            let v = kernel.eval(lj, lk) - kernel.eval(lj, wk) - kernel.eval(wj, lk) + kernel.eval(wj, wk);
            s[(j, k)] = v;
            s[(k, j)] = v;
        }
        s[(j, j)] += noise.noise_variance(&duels[j].winner) + noise.noise_variance(&duels[j].loser);
    }
    s
}

pub fn build_joint(
    test_points: &[Point],
    dataset: &DuelDataset,
    kernel: &SquaredExponential,
    noise: &dyn NoiseModel,
) -> Result<JointCovariance> {
    let duels = duel_covariance(dataset, kernel, noise);
    Cholesky::new(&duels)?;
    let winners: Vec<Point> = dataset.duels().iter().map(|d| d.winner.clone()).collect();
    let losers: Vec<Point> = dataset.duels().iter().map(|d| d.loser.clone()).collect();
    let t = test_points.len();
    let m = dataset.len();
    let mut cross = Matrix::zeros(t, m);
    for (i, x) in test_points.iter().enumerate() {
        cross.row_mut(i).copy_from_slice(&cross_row(x, &winners, &losers, kernel));
    }
    Ok(JointCovariance {
        test: kernel.gram(test_points),
        cross,
        duels,
        test_noise: test_points.iter().map(|x| noise.noise_variance(x)).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GibbsSettings {
    pub burn_in: usize,
    /// Sweeps between retained states when several are drawn.
    pub thinning: usize,
}

impl Default for GibbsSettings {
    fn default() -> Self {
        Self {
            burn_in: 50,
            thinning: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HallucinationSample {
    /// Every entry is strictly negative.
    pub values: Vec<f64>,
    /// Conditional draws whose truncated mass underflowed.
    pub saturations: usize,
}

/// Coordinate-wise Gibbs sampler for `N(0, Σ)` truncated to the negative
/// orthant. Each coordinate is drawn from its full conditional
/// `N(v_j − [Pv]_j / P_jj, 1 / P_jj)` with `P = Σ⁻¹`.
#[derive(Clone, Debug)]
pub struct TruncatedMvnGibbs {
    precision: Matrix,
    state: Vec<f64>,
    /// `P·state`, updated incrementally.
    pv: Vec<f64>,
    saturations: usize,
}

impl TruncatedMvnGibbs {
    pub fn new(sigma: &Matrix) -> Result<Self> {
        let mut precision = Cholesky::new(sigma)?.inverse();
        precision.symmetrize();
        let m = sigma.rows();
        // start at the marginal half-normal means
        let state: Vec<f64> = (0..m)
            .map(|j| -libm::sqrt(2.0 / core::f64::consts::PI) * libm::sqrt(sigma[(j, j)].max(f64::MIN_POSITIVE)))
            .collect();
        let pv = precision.matvec(&state);
        Ok(Self {
            precision,
            state,
            pv,
            saturations: 0,
        })
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn saturations(&self) -> usize {
        self.saturations
    }

    pub fn sweep<R: RngCore + ?Sized>(&mut self, rng: &mut R) {
        let m = self.state.len();
        for j in 0..m {
            let pjj = self.precision[(j, j)];
            let mean = self.state[j] - self.pv[j] / pjj;
            let draw = sample_truncated_normal_below_zero(mean, 1.0 / pjj, rng);
            if draw.saturated {
                self.saturations += 1;
            }
            let delta = draw.value - self.state[j];
            self.state[j] = draw.value;
            if delta != 0.0 {
                for (i, p) in self.pv.iter_mut().enumerate() {
                    *p += delta * self.precision[(i, j)];
                }
            }
        }
    }

    /// Burn in, then keep `count` states separated by `thinning` sweeps.
    pub fn run<R: RngCore + ?Sized>(&mut self, settings: GibbsSettings, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
        for _ in 0..settings.burn_in {
            self.sweep(rng);
        }
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            for _ in 0..settings.thinning.max(1) {
                self.sweep(rng);
            }
            out.push(self.state.clone());
        }
        out
    }
}

/// One hallucination: the chain state after `burn_in` sweeps.
pub fn gibbs_hallucinate<R: RngCore + ?Sized>(
    sigma_vv: &Matrix,
    settings: GibbsSettings,
    rng: &mut R,
) -> Result<HallucinationSample> {
    let mut chain = TruncatedMvnGibbs::new(sigma_vv)?;
    for _ in 0..settings.burn_in.max(1) {
        chain.sweep(rng);
    }
    Ok(HallucinationSample {
        values: chain.state.clone(),
        saturations: chain.saturations,
    })
}

/// Whether the predictive covariance includes the test-point noise `V*`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PredictiveNoise {
    /// Posterior of the latent `f*` only.
    #[default]
    Latent,
    /// Adds `V*`: the predictive of a noisy observation at the test point.
    Observed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveGaussian {
    pub mean: Vec<f64>,
    pub covariance: Matrix,
}

impl PredictiveGaussian {
    /// Marginal variances, floored at zero.
    pub fn variances(&self) -> Vec<f64> {
        self.covariance.diag().into_iter().map(|v| v.max(0.0)).collect()
    }
}

/// `µ = Σ*v Σvv⁻¹ ṽ`, `Σ = Σ** (+ V*) − Σ*v Σvv⁻¹ Σv*`.
pub fn hb_predict(joint: &JointCovariance, hallucination: &[f64], mode: PredictiveNoise) -> Result<PredictiveGaussian> {
    let m = joint.num_duels();
    if hallucination.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: hallucination.len(),
        });
    }
    let t = joint.num_test();
    if m == 0 {
        let mut covariance = joint.test.clone();
        if mode == PredictiveNoise::Observed {
            for (i, v) in joint.test_noise.iter().enumerate() {
                covariance[(i, i)] += v;
            }
        }
        return Ok(PredictiveGaussian {
            mean: vec![0.0; t],
            covariance,
        });
    }
    let chol = Cholesky::new(&joint.duels)?;
    let y = chol.solve(hallucination);
    let mean = joint.cross.matvec(&y);
    let w = chol.solve_lower_matrix(&joint.cross.transpose());
    let mut covariance = joint.test.sub(&w.transpose().matmul(&w));
    if mode == PredictiveNoise::Observed {
        for (i, v) in joint.test_noise.iter().enumerate() {
            covariance[(i, i)] += v;
        }
    }
    covariance.symmetrize();
    Ok(PredictiveGaussian { mean, covariance })
}

/// `µ = L*X a`, `Σ = L** − L*X Rᵀ B⁻¹ R LX*`.
pub fn laplace_predict(test_points: &[Point], fit: &LaplaceFit) -> PredictiveGaussian {
    let kernel = fit.kernel();
    let t = test_points.len();
    let m = fit.num_duels();
    let k_star = kernel.cross(test_points, fit.points());
    let mean = if m == 0 { vec![0.0; t] } else { k_star.matvec(&fit.alpha) };
    let mut covariance = kernel.gram(test_points);
    if m > 0 {
        let mut rk = Matrix::zeros(m, t);
        for i in 0..t {
            let r = apply_r(m, fit.sqrt_weights(), k_star.row(i));
            for k in 0..m {
                rk[(k, i)] = r[k];
            }
        }
        let w = fit.b_cholesky().solve_lower_matrix(&rk);
        covariance = covariance.sub(&w.transpose().matmul(&w));
        covariance.symmetrize();
    }
    PredictiveGaussian { mean, covariance }
}

/// Pointwise latent posterior `(µ_f(x), σ²_f(x))`.
pub trait LatentPosterior {
    fn predict(&self, x: &[f64]) -> (f64, f64);

    fn mean(&self, x: &[f64]) -> f64 {
        self.predict(x).0
    }
}

/// Hallucination-believer posterior conditioned on one hallucination.
#[derive(Clone, Debug)]
pub struct HbPosterior {
    kernel: SquaredExponential,
    winners: Vec<Point>,
    losers: Vec<Point>,
    chol: Option<Cholesky>,
    /// `Σvv⁻¹ ṽ`.
    weights: Vec<f64>,
}

impl HbPosterior {
    pub fn new(
        dataset: &DuelDataset,
        kernel: &SquaredExponential,
        noise: &dyn NoiseModel,
        hallucination: &[f64],
    ) -> Result<Self> {
        let sigma = duel_covariance(dataset, kernel, noise);
        Self::from_covariance(dataset, kernel, &sigma, hallucination)
    }

    /// Reuses an already assembled `Σvv`.
    pub fn from_covariance(
        dataset: &DuelDataset,
        kernel: &SquaredExponential,
        sigma_vv: &Matrix,
        hallucination: &[f64],
    ) -> Result<Self> {
        let m = dataset.len();
        if hallucination.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: hallucination.len(),
            });
        }
        let (chol, weights) = if m == 0 {
            (None, Vec::new())
        } else {
            let c = Cholesky::new(sigma_vv)?;
            let w = c.solve(hallucination);
            (Some(c), w)
        };
        Ok(Self {
            kernel: kernel.clone(),
            winners: dataset.duels().iter().map(|d| d.winner.clone()).collect(),
            losers: dataset.duels().iter().map(|d| d.loser.clone()).collect(),
            chol,
            weights,
        })
    }
}

impl LatentPosterior for HbPosterior {
    fn predict(&self, x: &[f64]) -> (f64, f64) {
        let prior = self.kernel.signal_variance();
        let Some(chol) = &self.chol else {
            return (0.0, prior);
        };
        let kv = cross_row(x, &self.winners, &self.losers, &self.kernel);
        let mean = dot(&kv, &self.weights);
        let w = chol.solve_lower(&kv);
        (mean, (prior - dot(&w, &w)).max(0.0))
    }
}

/// Laplace posterior, evaluated pointwise.
#[derive(Clone, Debug)]
pub struct LaplacePosterior {
    fit: LaplaceFit,
}

impl LaplacePosterior {
    pub fn new(fit: LaplaceFit) -> Self {
        Self { fit }
    }

    pub fn fit(&self) -> &LaplaceFit {
        &self.fit
    }
}

impl LatentPosterior for LaplacePosterior {
    fn predict(&self, x: &[f64]) -> (f64, f64) {
        let kernel = self.fit.kernel();
        let prior = kernel.signal_variance();
        let m = self.fit.num_duels();
        if m == 0 {
            return (0.0, prior);
        }
        let k: Vec<f64> = self.fit.points().iter().map(|p| kernel.eval(x, p)).collect();
        let mean = dot(&k, &self.fit.alpha);
        let r = apply_r(m, self.fit.sqrt_weights(), &k);
        let w = self.fit.b_cholesky().solve_lower(&r);
        (mean, (prior - dot(&w, &w)).max(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kde::Homoscedastic;
    use crate::math::sampling::stream;
    use crate::math::RbfKernelParams;
    use crate::preference::{fit_map, DuelRecord, DEFAULT_MAX_ITER, DEFAULT_TOLERANCE};

    fn kernel(l: f64) -> SquaredExponential {
        SquaredExponential::new(RbfKernelParams::new(l, 1.0).unwrap())
    }

    fn one_duel() -> DuelDataset {
        DuelDataset::from_duels(vec![DuelRecord::new(vec![0.2], vec![0.8]).unwrap()]).unwrap()
    }

    #[test]
    fn winner_enters_negatively() {
        let j = build_joint(&[vec![0.2]], &one_duel(), &kernel(1e-3), &Homoscedastic(0.1)).unwrap();
        assert!((j.cross[(0, 0)] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_hallucination_gives_zero_mean() {
        let ds = one_duel();
        let j = build_joint(&[vec![0.1], vec![0.5]], &ds, &kernel(0.3), &Homoscedastic(0.1)).unwrap();
        let p = hb_predict(&j, &[0.0], PredictiveNoise::Latent).unwrap();
        assert!(p.mean.iter().all(|m| *m == 0.0));
    }

    #[test]
    fn chain_is_negative_and_reproducible() {
        let ds = DuelDataset::from_duels(vec![
            DuelRecord::new(vec![0.2], vec![0.8]).unwrap(),
            DuelRecord::new(vec![0.2], vec![0.5]).unwrap(),
            DuelRecord::new(vec![0.9], vec![0.5]).unwrap(),
        ])
        .unwrap();
        let s = duel_covariance(&ds, &kernel(0.3), &Homoscedastic(0.05));
        let a = gibbs_hallucinate(&s, GibbsSettings::default(), &mut stream(5, 1)).unwrap();
        let b = gibbs_hallucinate(&s, GibbsSettings::default(), &mut stream(5, 1)).unwrap();
        assert_eq!(a, b);
        assert!(a.values.iter().all(|v| *v < 0.0));
    }

    #[test]
    fn pointwise_matches_batch() {
        let ds = DuelDataset::from_duels(vec![
            DuelRecord::new(vec![0.2], vec![0.8]).unwrap(),
            DuelRecord::new(vec![0.4], vec![0.1]).unwrap(),
        ])
        .unwrap();
        let k = kernel(0.3);
        let noise = Homoscedastic(0.05);
        let tests = vec![vec![0.3], vec![0.7]];
        let v = [-0.4, -0.9];
        let batch = hb_predict(&build_joint(&tests, &ds, &k, &noise).unwrap(), &v, PredictiveNoise::Latent).unwrap();
        let hb = HbPosterior::new(&ds, &k, &noise, &v).unwrap();
        for (i, x) in tests.iter().enumerate() {
            let (m, s) = hb.predict(x);
            assert!((m - batch.mean[i]).abs() < 1e-12);
            assert!((s - batch.covariance[(i, i)]).abs() < 1e-12);
        }
        let fit = fit_map(&ds, &k, &noise, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER).unwrap();
        let batch = laplace_predict(&tests, &fit);
        let lp = LaplacePosterior::new(fit);
        for (i, x) in tests.iter().enumerate() {
            let (m, s) = lp.predict(x);
            assert!((m - batch.mean[i]).abs() < 1e-12);
            assert!((s - batch.covariance[(i, i)]).abs() < 1e-12);
        }
    }
}
