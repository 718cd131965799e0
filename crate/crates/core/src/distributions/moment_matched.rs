//! The one-dimensional non-Gaussian component
//! `A(x) dx = G(x) dx + p(x) 1{|x| < 1} dx + eps * delta_R`.
//!
//! The bump `p` has degree `m` and cancels the atom's first `m` moments, so
//! `A` agrees with N(0,1) on moments `0..=m`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{contract, LabError, Result};
use crate::stats::{gaussian_moment, normal_cdf, normal_pdf};

pub const MAX_MATCHED_MOMENTS: usize = 12;

/// Spacing of the positivity audit grid on [-1, 1].
pub const AUDIT_GRID_STEP: f64 = 1e-4;

const AUDIT_GRID_POINTS: usize = 20_001;

/// `poly(m) = 100 (m+1)^(2(m+1))`, the denominator of the atom-mass floor.
pub fn eps_floor_poly(m: usize) -> f64 {
    100.0 * ((m + 1) as f64).powi(2 * (m as i32 + 1))
}

/// Smallest admissible atom mass `R^-m / poly(m)`.
pub fn eps_floor(m: usize, r: f64) -> f64 {
    r.powi(-(m as i32)) / eps_floor_poly(m)
}

/// What the positivity audit saw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub grid_step: f64,
    /// Largest eps keeping `G + eps*q >= 0` on the grid (`q` = bump per unit eps).
    pub eps_cap: f64,
    pub eps_floor: f64,
    /// `min (G + p)` over the grid for the chosen eps.
    pub min_density: f64,
    /// `max |p|` over the grid, used by the rejection envelope.
    pub max_abs_bump: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentMatchedA {
    pub m: usize,
    pub r: f64,
    pub eps: f64,
    /// Monomial coefficients of the bump `p` on [-1, 1], lowest degree first.
    pub bump: Vec<f64>,
    pub audit: Audit,
}

fn audit_grid() -> impl Iterator<Item = f64> {
    (0..AUDIT_GRID_POINTS).map(|i| -1.0 + i as f64 * AUDIT_GRID_STEP)
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// `int_{-1}^{1} x^s dx`.
fn unit_moment(s: usize) -> f64 {
    if s % 2 == 1 {
        0.0
    } else {
        2.0 / (s + 1) as f64
    }
}

/// Bump per unit atom mass: `int q(x) x^t dx = -R^t` for `t = 0..=m`.
fn unit_bump(m: usize, r: f64) -> Result<Vec<f64>> {
    let gram = DMatrix::from_fn(m + 1, m + 1, |t, s| unit_moment(s + t));
    let rhs = DVector::from_fn(m + 1, |t, _| -r.powi(t as i32));
    let q = gram
        .lu()
        .solve(&rhs)
        .ok_or_else(|| LabError::Internal("singular moment system".into()))?;
    Ok(q.iter().copied().collect())
}

/// The moment-matched component with `m` matched moments and atom at `r`.
pub fn build_prop_c2(m: usize, r: f64) -> Result<MomentMatchedA> {
    build_with_eps(m, r, None)
}

/// As [`build_prop_c2`]; `eps_override` replaces the automatic choice and
/// skips the floor check (it must still keep the density nonnegative).
pub fn build_with_eps(m: usize, r: f64, eps_override: Option<f64>) -> Result<MomentMatchedA> {
    if m > MAX_MATCHED_MOMENTS {
        return Err(contract(format!("m = {m} exceeds {MAX_MATCHED_MOMENTS}")));
    }
    if !(r > 1.0) || !r.is_finite() {
        return Err(contract(format!("atom location R = {r} must exceed 1")));
    }
    let q = unit_bump(m, r)?;
    let mut eps_cap = f64::INFINITY;
    for x in audit_grid() {
        let qx = horner(&q, x);
        if qx < 0.0 {
            eps_cap = eps_cap.min(normal_pdf(x) / -qx);
        }
    }
    let floor = eps_floor(m, r);
    let eps = match eps_override {
        Some(e) => {
            if !(0.0..1.0).contains(&e) || e > eps_cap {
                return Err(contract(format!("eps override {e} outside [0, min(1, {eps_cap:e})]")));
            }
            e
        }
        None => {
            let e = 0.5 * eps_cap.min(1.0);
            if e < floor {
                return Err(LabError::Construction { achieved: e, floor });
            }
            e
        }
    };
    let bump: Vec<f64> = q.iter().map(|c| c * eps).collect();
    let mut min_density = f64::INFINITY;
    let mut max_abs_bump: f64 = 0.0;
    for x in audit_grid() {
        let px = horner(&bump, x);
        min_density = min_density.min(normal_pdf(x) + px);
        max_abs_bump = max_abs_bump.max(px.abs());
    }
    if min_density < 0.0 {
        return Err(LabError::Internal(format!("audited density dips to {min_density:e}")));
    }
    Ok(MomentMatchedA {
        m,
        r,
        eps,
        bump,
        audit: Audit { grid_step: AUDIT_GRID_STEP, eps_cap, eps_floor: floor, min_density, max_abs_bump },
    })
}

/// `E|g|^t` for g ~ N(0,1).
pub fn gaussian_abs_moment(t: u32) -> f64 {
    let t = t as f64;
    (0.5 * t * std::f64::consts::LN_2 + ln_gamma(0.5 * (t + 1.0)) - 0.5 * std::f64::consts::PI.ln()).exp()
}

impl MomentMatchedA {
    /// The bump polynomial `p(x)` (without the indicator).
    pub fn bump_at(&self, x: f64) -> f64 {
        horner(&self.bump, x)
    }

    /// Density of the continuous part, `G(x) + p(x) 1{|x| < 1}`.
    pub fn density(&self, x: f64) -> f64 {
        let g = normal_pdf(x);
        if x.abs() < 1.0 {
            g + self.bump_at(x)
        } else {
            g
        }
    }

    /// `E_A[x^t]`, exactly.
    pub fn analytic_moment(&self, t: u32) -> f64 {
        let bump: f64 = self.bump.iter().enumerate().map(|(s, c)| c * unit_moment(s + t as usize)).sum();
        gaussian_moment(t) + bump + self.eps * self.r.powi(t as i32)
    }

    /// `E_A[|x|^t]`, exactly.
    pub fn analytic_abs_moment(&self, t: u32) -> f64 {
        // int_{-1}^{1} |x|^t x^s dx = 2/(s+t+1) for even s, 0 for odd s.
        let bump: f64 = self
            .bump
            .iter()
            .enumerate()
            .filter(|(s, _)| s % 2 == 0)
            .map(|(s, c)| c * 2.0 / (s as f64 + t as f64 + 1.0))
            .sum();
        gaussian_abs_moment(t) + bump + self.eps * self.r.abs().powi(t as i32)
    }

    /// `Pr_A[|x| > big_t]`, exactly.
    pub fn tail_probability(&self, big_t: f64) -> f64 {
        let gauss = 2.0 * normal_cdf(-big_t);
        let bump = if big_t < 1.0 {
            // int_{T < |x| < 1} p = int_{-1}^{1} p - int_{-T}^{T} p
            self.bump
                .iter()
                .enumerate()
                .filter(|(s, _)| s % 2 == 0)
                .map(|(s, c)| c * 2.0 * (1.0 - big_t.powi(s as i32 + 1)) / (s + 1) as f64)
                .sum()
        } else {
            0.0
        };
        let atom = if self.r.abs() > big_t { self.eps } else { 0.0 };
        gauss + bump + atom
    }

    /// Key-value text record; parses back bit-exactly with [`Self::from_record`].
    pub fn to_record(&self) -> String {
        let bump: Vec<String> = self.bump.iter().map(|c| format!("{c:e}")).collect();
        format!(
            "m={}\nR={:e}\neps={:e}\nbump={}\ngrid_step={:e}\neps_cap={:e}\neps_floor={:e}\nmin_density={:e}\nmax_abs_bump={:e}\n",
            self.m,
            self.r,
            self.eps,
            bump.join(" "),
            self.audit.grid_step,
            self.audit.eps_cap,
            self.audit.eps_floor,
            self.audit.min_density,
            self.audit.max_abs_bump
        )
    }

    pub fn from_record(text: &str) -> Result<Self> {
        let mut fields = std::collections::BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line.split_once('=').ok_or_else(|| contract(format!("malformed record line `{line}`")))?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| fields.get(k).ok_or_else(|| contract(format!("record is missing `{k}`")));
        let num = |k: &str| -> Result<f64> {
            get(k)?.parse::<f64>().map_err(|e| contract(format!("field `{k}`: {e}")))
        };
        let m = get("m")?.parse::<usize>().map_err(|e| contract(format!("field `m`: {e}")))?;
        let bump = get("bump")?
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|e| contract(format!("field `bump`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if bump.len() != m + 1 {
            return Err(contract(format!("bump has {} coefficients, expected {}", bump.len(), m + 1)));
        }
        Ok(MomentMatchedA {
            m,
            r: num("R")?,
            eps: num("eps")?,
            bump,
            audit: Audit {
                grid_step: num("grid_step")?,
                eps_cap: num("eps_cap")?,
                eps_floor: num("eps_floor")?,
                min_density: num("min_density")?,
                max_abs_bump: num("max_abs_bump")?,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Legendre P_i(x) by the three-term recurrence.
    fn legendre(i: usize, x: f64) -> f64 {
        let (mut p0, mut p1) = (1.0, x);
        if i == 0 {
            return p0;
        }
        for j in 1..i {
            let p2 = ((2 * j + 1) as f64 * x * p1 - j as f64 * p0) / (j + 1) as f64;
            p0 = p1;
            p1 = p2;
        }
        p1
    }

    #[test]
    fn constant_bump_at_m0() {
        let a = build_prop_c2(0, 2.0).unwrap();
        let cap = 2.0 * normal_pdf(1.0);
        assert!((a.audit.eps_cap - cap).abs() < 1e-15);
        assert!((a.eps - 0.241_970_724_519_143_37).abs() < 1e-12);
        assert!((a.bump[0] + a.eps / 2.0).abs() < 1e-15);
    }

    #[test]
    fn linear_bump_at_m1() {
        let a = build_prop_c2(1, 2.0).unwrap();
        assert!((a.bump[0] + a.eps / 2.0).abs() < 1e-14);
        assert!((a.bump[1] + 1.5 * a.eps * 2.0).abs() < 1e-14);
        assert!(a.analytic_moment(1).abs() < 1e-14);
    }

    #[test]
    fn bump_matches_legendre_closed_form() {
        for m in 0..=8 {
            let r = 2.5;
            let a = build_prop_c2(m, r).unwrap();
            for x in [-0.9, -0.3, 0.0, 0.4, 0.95] {
                let closed: f64 = (0..=m).map(|i| -((2 * i + 1) as f64) / 2.0 * legendre(i, r) * legendre(i, x)).sum();
                let got = a.bump_at(x) / a.eps;
                assert!((got - closed).abs() < 1e-8 * closed.abs().max(1.0), "m={m} x={x}: {got} vs {closed}");
            }
        }
    }

    #[test]
    fn moments_match_gaussian() {
        let a = build_prop_c2(6, 3.0).unwrap();
        for t in 0..=6 {
            assert!((a.analytic_moment(t) - gaussian_moment(t)).abs() < 1e-8, "t={t}");
        }
        assert!(a.audit.min_density >= 0.0);
        assert!(a.eps >= eps_floor(6, 3.0));
        assert!((a.analytic_moment(7) - gaussian_moment(7)).abs() > 1e-6);
    }

    #[test]
    fn moment_by_quadrature() {
        let a = build_prop_c2(2, 3.0).unwrap();
        // Composite Simpson on the bump; the Gaussian part is (t-1)!!.
        let h = 1e-4;
        let steps = 20_000;
        let f = |x: f64| a.bump_at(x) * x.powi(4);
        let mut s = f(-1.0) + f(1.0);
        for i in 1..steps {
            let x = -1.0 + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        let quad = 3.0 + s * h / 3.0 + a.eps * 81.0;
        assert!((a.analytic_moment(4) - quad).abs() < 1e-10);
        assert!((a.analytic_moment(4) - 3.0).abs() > 1e-6);
    }

    #[test]
    fn zero_eps_is_gaussian() {
        let a = build_with_eps(4, 2.0, Some(0.0)).unwrap();
        assert!(a.bump.iter().all(|c| *c == 0.0));
        for t in 0..=10 {
            assert_eq!(a.analytic_moment(t), gaussian_moment(t));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(build_prop_c2(13, 2.0).is_err());
        assert!(build_prop_c2(2, 1.0).is_err());
        assert!(build_with_eps(2, 2.0, Some(0.9)).is_err());
    }

    #[test]
    fn record_round_trip_and_determinism() {
        let a = build_prop_c2(5, 2.7).unwrap();
        let b = MomentMatchedA::from_record(&a.to_record()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, build_prop_c2(5, 2.7).unwrap());
    }

    #[test]
    fn chebyshev_tail_bound() {
        let a = build_prop_c2(4, 2.0).unwrap();
        for big_t in [0.5, 1.5, 3.0, 6.0] {
            assert!(a.tail_probability(big_t) <= a.analytic_abs_moment(4) / big_t.powi(4) + 1e-15);
        }
        assert!((a.analytic_abs_moment(2) - a.analytic_moment(2)).abs() < 1e-12);
        assert!((a.tail_probability(0.0) - 1.0).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn construction_is_bit_deterministic(m in 0usize..=6, r in 1.5f64..4.0) {
                let a = build_prop_c2(m, r);
                prop_assume!(a.is_ok());
                prop_assert_eq!(a.unwrap().to_record(), build_prop_c2(m, r).unwrap().to_record());
            }

            #[test]
            fn higher_order_chebyshev_tail(m in 1usize..=6, r in 1.5f64..4.0, big_t in 0.5f64..12.0) {
                let a = build_prop_c2(m, r).unwrap();
                let bound = a.analytic_abs_moment(m as u32) / big_t.powi(m as i32);
                prop_assert!(a.tail_probability(big_t) <= bound + 1e-12);
            }
        }
    }
}
