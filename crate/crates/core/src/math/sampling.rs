//! Seeded samplers. Every draw goes through an injected [`RngCore`]; nothing
//! here owns global state.

use alloc::vec::Vec;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::special::{inverse_std_normal_cdf, std_normal_cdf};

/// Smallest truncation mass before the sampler gives up and returns a value
/// just below zero.
const MIN_TRUNCATED_MASS: f64 = 1e-300;

/// An independent ChaCha8 stream for `(seed, stream_id)`.
pub fn stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Uniform on the open interval (0, 1) with 53 bits of resolution.
#[inline]
pub fn unit_open<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

#[inline]
pub fn uniform<R: RngCore + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit_open(rng)
}

/// Standard normal by inverse-cdf transform.
#[inline]
pub fn std_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    inverse_std_normal_cdf(unit_open(rng))
}

/// Gamma(shape, 1) by Marsaglia–Tsang; shapes below one use the boost
/// `G(k) = G(k+1)·U^{1/k}`.
pub fn gamma<R: RngCore + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    debug_assert!(shape > 0.0);
    if shape < 1.0 {
        let u = unit_open(rng);
        return gamma(rng, shape + 1.0) * libm::pow(u, 1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / libm::sqrt(9.0 * d);
    loop {
        let x = std_normal(rng);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = unit_open(rng);
        if libm::log(u) < 0.5 * x * x + d - d * v + d * libm::log(v) {
            return d * v;
        }
    }
}

/// Student-t with `dof` degrees of freedom (location 0, scale 1).
pub fn student_t<R: RngCore + ?Sized>(rng: &mut R, dof: f64) -> f64 {
    let z = std_normal(rng);
    let chi2 = 2.0 * gamma(rng, 0.5 * dof);
    z / libm::sqrt(chi2 / dof)
}

/// One draw from `N(mean, variance)` conditioned on being negative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncatedDraw {
    pub value: f64,
    /// True when the truncated mass `Φ(−mean/σ)` underflowed and the value is
    /// a placeholder just below zero.
    pub saturated: bool,
}

/// Inverse-cdf sampling of `N(mean, variance) | value < 0`. The result is
/// always strictly negative.
pub fn sample_truncated_normal_below_zero<R: RngCore + ?Sized>(
    mean: f64,
    variance: f64,
    rng: &mut R,
) -> TruncatedDraw {
    debug_assert!(variance > 0.0);
    let sd = libm::sqrt(variance);
    let upper = -mean / sd;
    let mass = std_normal_cdf(upper);
    let u = unit_open(rng);
    let tiny = -sd * 1e-12;
    if !(mass >= MIN_TRUNCATED_MASS) {
        return TruncatedDraw {
            value: tiny,
            saturated: true,
        };
    }
    let z = inverse_std_normal_cdf(u * mass);
    // mean + sd·z written to keep the sign exact when z ≈ upper
    let value = sd * (z - upper);
    TruncatedDraw {
        value: if value < 0.0 { value } else { tiny },
        saturated: false,
    }
}

/// Radical inverse of `index` in base `base`.
fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while index > 0 {
        out += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    out
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Point `index` (starting at 1) of the Halton sequence in `[0,1)^dim`.
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "halton supports up to 16 dimensions");
    PRIMES[..dim].iter().map(|b| radical_inverse(index, *b)).collect()
}
