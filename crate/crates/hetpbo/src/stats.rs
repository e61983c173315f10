//! Summary statistics and the paired sign test used to compare acquisition
//! functions across matched seeds.

use serde::Serialize;
use statrs::distribution::{Binomial, DiscreteCDF};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (`n − 1` denominator); 0 for fewer than two values.
pub fn sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// One-sided `P(X ≥ wins)` for `X ~ Bin(wins + losses, 1/2)`.
    pub p_value: f64,
}

/// Tests whether `a` tends to be smaller than `b` on paired samples; ties
/// are dropped.
pub fn sign_test_less(a: &[f64], b: &[f64]) -> SignTest {
    assert_eq!(a.len(), b.len(), "paired samples must have equal length");
    let wins = a.iter().zip(b).filter(|(x, y)| x < y).count();
    let losses = a.iter().zip(b).filter(|(x, y)| x > y).count();
    let n = wins + losses;
    let p_value = if wins == 0 {
        1.0
    } else {
        Binomial::new(0.5, n as u64).expect("valid binomial").sf(wins as u64 - 1)
    };
    SignTest { wins, losses, ties: a.len() - n, p_value }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert!((sd(&[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-15);
        assert_eq!(sd(&[4.0]), 0.0);
        assert_eq!(sd(&[2.0, 2.0, 2.0]), 0.0);
    }

    #[test]
    fn sign_test_tail() {
        // 20 of 30: sum_{k>=20} C(30,k)/2^30
        let a: Vec<f64> = (0..30).map(|i| if i < 20 { 0.0 } else { 1.0 }).collect();
        let b = vec![0.5; 30];
        let t = sign_test_less(&a, &b);
        assert_eq!((t.wins, t.losses, t.ties), (20, 10, 0));
        assert!((t.p_value - 0.04936857335269451).abs() < 1e-12, "{}", t.p_value);
        let all = sign_test_less(&[0.0; 10], &[1.0; 10]);
        assert!((all.p_value - 1.0 / 1024.0).abs() < 1e-15);
        let none = sign_test_less(&[1.0; 3], &[1.0; 3]);
        assert_eq!((none.ties, none.p_value), (3, 1.0));
    }
}
