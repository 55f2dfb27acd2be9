//! Head statistics and the lower-confidence-bound coefficient.
//!
//! If `K` heads are i.i.d. draws from `N(μ, σ²)`, the expected minimum is
//! approximately `μ − c(K)·σ` with `c(K) = Φ⁻¹((K − π/8) / (K − π/4 + 1))`.
//! Training on the minimum head therefore implicitly trains on an LCB whose
//! width grows with `K`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::numerics::inverse_normal_cdf;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeadStats {
    pub min: f64,
    /// Lowest index attaining `min`.
    pub argmin: usize,
    pub mean: f64,
    /// Population standard deviation (divides by K).
    pub std: f64,
}

pub fn head_stats(q: &[f64]) -> Result<HeadStats> {
    if q.is_empty() {
        return Err(Error::InvalidArgument("head_stats of zero heads".into()));
    }
    if let Some(i) = q.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("head {i} = {}", q[i])));
    }
    let k = q.len() as f64;
    let (mut argmin, mut min) = (0, q[0]);
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v < min {
            min = v;
            argmin = i;
        }
    }
    // Offsets from the minimum are non-negative, so mean >= min survives
    // rounding and equal heads give exactly mean == min, std == 0.
    let mean = min + q.iter().map(|v| v - min).sum::<f64>() / k;
    let var = q.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k;
    Ok(HeadStats {
        min,
        argmin,
        mean,
        std: var.sqrt(),
    })
}

const CACHED: usize = 256;

fn coefficient_uncached(k: usize) -> f64 {
    let k = k as f64;
    inverse_normal_cdf((k - PI / 8.0) / (k - PI / 4.0 + 1.0))
}

/// `c(K)` such that `E[min_k Q^k] ≈ μ − c(K)·σ`.
pub fn royston_min_coefficient(k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| (0..CACHED).map(|k| if k == 0 { f64::NAN } else { coefficient_uncached(k) }).collect());
    Ok(table.get(k).copied().unwrap_or_else(|| coefficient_uncached(k)))
}

/// `μ − c(K)·σ`.
pub fn lcb(mean: f64, std: f64, k: usize) -> Result<f64> {
    if std < 0.0 || std.is_nan() {
        return Err(Error::InvalidArgument(format!("std must be >= 0, got {std}")));
    }
    Ok(mean - royston_min_coefficient(k)? * std)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{normal_cdf, RngStream};
    use proptest::prelude::*;

    #[test]
    fn hand_example() {
        let s = head_stats(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(s.min, 1.0);
        assert_eq!(s.argmin, 1);
        assert_eq!(s.mean, 2.0);
        assert!((s.std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn degenerate_ensembles() {
        let s = head_stats(&[0.7; 5]).unwrap();
        assert_eq!((s.min, s.mean, s.std, s.argmin), (0.7, 0.7, 0.0, 0));
        let s = head_stats(&[-4.0]).unwrap();
        assert_eq!((s.min, s.mean, s.std), (-4.0, -4.0, 0.0));
        assert!(head_stats(&[]).is_err());
        assert!(head_stats(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn ties_pick_lowest_index() {
        assert_eq!(head_stats(&[2.0, 0.5, 3.0, 0.5]).unwrap().argmin, 1);
    }

    #[test]
    fn coefficient_values() {
        // (1 − π/8)/(2 − π/4) = 1/2 exactly in reals.
        assert_eq!(royston_min_coefficient(1).unwrap().abs(), 0.0);
        assert!((royston_min_coefficient(2).unwrap() - 0.600).abs() < 5e-4);
        assert!((royston_min_coefficient(10).unwrap() - 1.56).abs() < 5e-3);
        assert!(royston_min_coefficient(0).is_err());
        assert_eq!(royston_min_coefficient(300).unwrap(), coefficient_uncached(300));
    }

    #[test]
    fn coefficient_strictly_increasing() {
        for k in 1..64 {
            assert!(royston_min_coefficient(k + 1).unwrap() > royston_min_coefficient(k).unwrap());
        }
    }

    #[test]
    fn coefficient_against_bisection() {
        for k in [2usize, 5, 10, 20] {
            let p = (k as f64 - PI / 8.0) / (k as f64 - PI / 4.0 + 1.0);
            let (mut lo, mut hi) = (-10.0, 10.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if normal_cdf(mid) < p {
                    lo = mid
                } else {
                    hi = mid
                }
            }
            assert!((royston_min_coefficient(k).unwrap() - lo).abs() < 1e-9);
        }
    }

    #[test]
    fn lcb_cases() {
        for k in 1..30 {
            assert_eq!(lcb(3.5, 0.0, k).unwrap(), 3.5);
        }
        assert_eq!(lcb(0.0, 1.0, 1).unwrap().abs(), 0.0);
        let c10 = royston_min_coefficient(10).unwrap();
        assert_eq!(lcb(5.0, 2.0, 10).unwrap(), 5.0 - 2.0 * c10);
        assert!(lcb(0.0, -1.0, 3).is_err());
    }

    #[test]
    fn monte_carlo_minimum_of_ten() {
        let mut rng = RngStream::new(2024);
        let n = 200_000;
        let k = 10;
        let total: f64 = (0..n)
            .map(|_| (0..k).map(|_| rng.normal()).fold(f64::INFINITY, f64::min))
            .sum();
        let mc = total / n as f64;
        let approx = lcb(0.0, 1.0, k).unwrap();
        assert!(((approx - mc) / mc).abs() < 0.02, "mc {mc} approx {approx}");
    }

    proptest! {
        #[test]
        fn stats_invariants(q in prop::collection::vec(-1e6f64..1e6, 1..32)) {
            let s = head_stats(&q).unwrap();
            prop_assert!(s.min <= s.mean);
            prop_assert!(s.std >= 0.0);
            prop_assert_eq!(q[s.argmin], s.min);
        }

        #[test]
        fn permutation_invariant(mut q in prop::collection::vec(-100f64..100.0, 1..16), seed in any::<u64>()) {
            let a = head_stats(&q).unwrap();
            let mut rng = RngStream::new(seed);
            for i in (1..q.len()).rev() {
                q.swap(i, rng.below(i + 1));
            }
            let b = head_stats(&q).unwrap();
            prop_assert_eq!(a.min, b.min);
            prop_assert!((a.mean - b.mean).abs() <= 1e-12 * a.mean.abs().max(1.0));
            prop_assert!((a.std - b.std).abs() <= 1e-9 * a.std.max(1.0));
        }

        #[test]
        fn zero_std_iff_equal(c in -10f64..10.0, k in 1usize..10) {
            prop_assert_eq!(head_stats(&vec![c; k]).unwrap().std, 0.0);
            let mut q = vec![c; k + 1];
            q[0] += 1.0;
            prop_assert!(head_stats(&q).unwrap().std > 0.0);
        }
    }
}
