//! Small statistics helpers shared by the Monte Carlo harnesses.

use serde::{Deserialize, Serialize};
use libm::erfc;

/// Two-sided 99% normal quantile used for every Wilson interval.
pub const Z99: f64 = 2.575_829_303_548_901;

pub fn normal_cdf(x: f64) -> f64 {
    if x < 0.0 {
        0.5 * erfc(-x / std::f64::consts::SQRT_2)
    } else {
        1.0 - 0.5 * erfc(x / std::f64::consts::SQRT_2)
    }
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// E[g^t] for g ~ N(0,1): (t-1)!! for even t, 0 for odd t.
pub fn gaussian_moment(t: u32) -> f64 {
    if t % 2 == 1 {
        return 0.0;
    }
    let mut acc = 1.0;
    let mut j = t as i64 - 1;
    while j > 1 {
        acc *= j as f64;
        j -= 2;
    }
    acc
}

/// (2t-1)!!
pub fn double_factorial_odd(t: u32) -> f64 {
    gaussian_moment(2 * t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub stderr: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
}

impl Proportion {
    pub fn new(successes: u64, trials: u64) -> Self {
        let (lo, hi) = wilson(successes, trials, Z99);
        let p = if trials == 0 { 0.0 } else { successes as f64 / trials as f64 };
        let stderr = if trials == 0 { 0.0 } else { (p * (1.0 - p) / trials as f64).sqrt() };
        Proportion { successes, trials, estimate: p, stderr, wilson_lo: lo, wilson_hi: hi }
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Median of the finite entries; `None` when there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Empirical q-quantile: the smallest sample value with at least a q fraction of samples at or below it.
pub fn upper_quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

pub fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var)
}

/// Least-squares slope and intercept of y against x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Slope of log(y) against log(x).
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly).0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_moments() {
        assert_eq!(gaussian_moment(0), 1.0);
        assert_eq!(gaussian_moment(2), 1.0);
        assert_eq!(gaussian_moment(4), 3.0);
        assert_eq!(gaussian_moment(6), 15.0);
        assert_eq!(gaussian_moment(5), 0.0);
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-15);
        assert!((normal_cdf(-2.0) - 0.022750131948179195).abs() < 1e-14);
    }

    #[test]
    fn wilson_contains_estimate_and_shrinks() {
        let (lo, hi) = wilson(50, 100, Z99);
        assert!(lo < 0.5 && hi > 0.5);
        let (lo2, hi2) = wilson(5000, 10000, Z99);
        assert!(hi2 - lo2 < hi - lo);
        let (lo0, _) = wilson(0, 10, Z99);
        assert_eq!(lo0, 0.0);
    }

    #[test]
    fn quantile_and_median() {
        let v: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        assert_eq!(upper_quantile(&v, 0.9), 9.0);
        assert_eq!(median(&v), Some(5.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn loglog_slope_recovers_power_law() {
        let x = [4.0, 16.0, 64.0, 256.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.5)).collect();
        assert!((loglog_slope(&x, &y) + 0.5).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn wilson_interval_brackets_the_estimate(trials in 1u64..100_000, frac in 0.0f64..=1.0) {
                let successes = ((trials as f64) * frac).floor() as u64;
                let p = Proportion::new(successes, trials);
                prop_assert!(0.0 <= p.wilson_lo && p.wilson_lo <= p.estimate + 1e-12);
                prop_assert!(p.estimate <= p.wilson_hi + 1e-12 && p.wilson_hi <= 1.0);
            }
        }
    }
}
