//! Conditional moments `E[x^t | |x| <= T]`.

use statrs::function::gamma::gamma_lr;

use super::moment_matched::{gaussian_abs_moment, MomentMatchedA};
use super::sampling::Component;
use crate::error::{LabError, Result};
use crate::stats::normal_cdf;

const MIN_CONDITIONING_MASS: f64 = 1e-12;

/// `int_{-T}^{T} x^t phi(x) dx` through the regularized lower incomplete gamma function.
pub fn gaussian_window_moment(t: u32, big_t: f64) -> f64 {
    if t % 2 == 1 {
        return 0.0;
    }
    if t == 0 {
        return 1.0 - 2.0 * normal_cdf(-big_t);
    }
    gaussian_abs_moment(t) * gamma_lr(0.5 * (t as f64 + 1.0), 0.5 * big_t * big_t)
}

/// `int_{-c}^{c} p(x) x^t dx` for the bump, `c = min(T, 1)`.
fn bump_window_moment(a: &MomentMatchedA, t: u32, big_t: f64) -> f64 {
    let c = big_t.min(1.0);
    a.bump
        .iter()
        .enumerate()
        .filter(|(s, _)| (s + t as usize).is_multiple_of(2))
        .map(|(s, coef)| {
            let e = (s + t as usize + 1) as i32;
            coef * 2.0 * c.powi(e) / e as f64
        })
        .sum()
}

fn window_moment(dist: &Component, t: u32, big_t: f64) -> Result<f64> {
    match dist {
        Component::Gaussian => Ok(gaussian_window_moment(t, big_t)),
        Component::MomentMatched(a) => {
            let atom = if a.r.abs() <= big_t { a.eps * a.r.powi(t as i32) } else { 0.0 };
            Ok(gaussian_window_moment(t, big_t) + bump_window_moment(a, t, big_t) + atom)
        }
        Component::Shifted { .. } => {
            Err(LabError::Capability("truncated moments are defined for the Gaussian and moment-matched laws".into()))
        }
    }
}

/// `E[x^t | x in [-T, T]]`, exactly.
pub fn truncated_conditional_moment(dist: &Component, t: u32, big_t: f64) -> Result<f64> {
    if !(big_t > 0.0) {
        return Err(crate::error::contract(format!("truncation radius {big_t} must be positive")));
    }
    let mass = window_moment(dist, 0, big_t)?;
    if mass < MIN_CONDITIONING_MASS {
        return Err(LabError::DegenerateConditioning { mass });
    }
    Ok(window_moment(dist, t, big_t)? / mass)
}
