//! The smooth plateau `rho`, the mollifier `g`, the mollified threshold
//! function `h = 1{p >= 0} g`, the well-behaved predicate and
//! finite-difference probes of `D^t_{i,v} h`.

mod experiments;
mod rho;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::tensor_poly::{DirectionalRestriction, Polynomial, SampleMatrix};

pub use experiments::{
    derivative_decay_probe, disagreement_rate, mollifier_suite, DecayProbe, DecayProbeConfig, DisagreementConfig,
    DisagreementReport, MollifierSuiteReport,
};
pub use rho::{rho, rho0, rho1, rho2, RhoTable, DEFAULT_RHO_STEP};

pub const DEFAULT_C_G: f64 = 0.2;

/// Number of grid points the well-behaved search visits.
pub const WELL_BEHAVED_GRID: usize = 401;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MollifierConfig {
    pub c_g: f64,
    pub rho_table_step: f64,
    /// Largest derivative order in the product defining `g`.
    pub k: usize,
}

impl MollifierConfig {
    pub fn new(c_g: f64, k: usize) -> Result<Self> {
        let cfg = MollifierConfig { c_g, rho_table_step: DEFAULT_RHO_STEP, k };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_g > 0.0 && self.c_g < 0.5) {
            return Err(contract(format!("c_g = {} must lie in (0, 1/2)", self.c_g)));
        }
        if !(self.rho_table_step > 0.0 && self.rho_table_step <= 1e-3) {
            return Err(contract(format!("rho_table_step = {} must lie in (0, 1e-3]", self.rho_table_step)));
        }
        Ok(())
    }
}

/// A config bound to its `rho` table.
#[derive(Debug, Clone)]
pub struct Mollifier {
    cfg: MollifierConfig,
    table: Arc<RhoTable>,
}

/// Result of a finite-difference probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdEstimate {
    pub value: f64,
    /// The stencil straddles a sign change of `p`.
    pub discontinuity: bool,
}

impl Mollifier {
    pub fn new(cfg: MollifierConfig) -> Result<Self> {
        cfg.validate()?;
        let table = if cfg.rho_table_step == DEFAULT_RHO_STEP {
            RhoTable::shared()
        } else {
            Arc::new(RhoTable::new(cfg.rho_table_step))
        };
        Ok(Mollifier { cfg, table })
    }

    pub fn config(&self) -> &MollifierConfig {
        &self.cfg
    }

    pub fn rho(&self, x: f64) -> f64 {
        self.table.rho(x)
    }

    /// `g` from `p(X)` and `‖p^{[t],v}(X)‖_F^2` for t = 1, 2, ...
    pub fn g_from_norms(&self, value: f64, norms_sq: &[f64], d: usize) -> f64 {
        if value == 0.0 {
            return 0.0;
        }
        let p2 = value * value;
        let mut g = 1.0;
        for (idx, &n2) in norms_sq.iter().enumerate().take(self.cfg.k) {
            let t = (idx + 1) as f64;
            g *= self.rho((d as f64).powf(self.cfg.c_g * t) * n2 / p2);
            if g == 0.0 {
                break;
            }
        }
        g
    }

    pub fn h_from_norms(&self, value: f64, norms_sq: &[f64], d: usize) -> f64 {
        if value >= 0.0 {
            self.g_from_norms(value, norms_sq, d)
        } else {
            0.0
        }
    }

    fn norms_of(q: &DirectionalRestriction) -> Vec<f64> {
        (1..=q.degree()).map(|t| q.norm_sq(t)).collect()
    }

    pub fn g(&self, p: &Polynomial, x: &SampleMatrix, v: &[f64]) -> Result<f64> {
        let q = DirectionalRestriction::new(p, x, v)?;
        Ok(self.g_from_norms(q.value(), &Self::norms_of(&q), p.d()))
    }

    pub fn h(&self, p: &Polynomial, x: &SampleMatrix, v: &[f64]) -> Result<f64> {
        let q = DirectionalRestriction::new(p, x, v)?;
        Ok(self.h_from_norms(q.value(), &Self::norms_of(&q), p.d()))
    }

    /// `h` with sample `slot` moved by `xi * v`, from the restriction at the base point.
    pub fn h_on_line(&self, q: &DirectionalRestriction, d: usize, slot: usize, xi: f64, scratch: &mut LineScratch) -> f64 {
        scratch.norms.resize(q.degree(), 0.0);
        let value = q.line_profile_into(slot, xi, &mut scratch.coeffs, &mut scratch.norms);
        self.h_from_norms(value, &scratch.norms, d)
    }

    /// First grid point `xi` in `[-big_t, big_t]` at which sample `slot`, replaced by
    /// `ybar + xi v` with `ybar` its component orthogonal to `v`, satisfies
    /// `‖p^{[t],v}‖_F^2 <= 3 d^{-c_g t} p^2` for all `t <= k`.
    pub fn well_behaved(
        &self,
        p: &Polynomial,
        x: &SampleMatrix,
        v: &[f64],
        slot: usize,
        big_t: f64,
    ) -> Result<Option<f64>> {
        if slot >= p.n() {
            return Err(contract(format!("slot {slot} out of range for n = {}", p.n())));
        }
        let q = DirectionalRestriction::new(p, x, v)?;
        Ok(self.well_behaved_restricted(&q, p.d(), x, v, slot, big_t))
    }

    pub fn well_behaved_restricted(
        &self,
        q: &DirectionalRestriction,
        d: usize,
        x: &SampleMatrix,
        v: &[f64],
        slot: usize,
        big_t: f64,
    ) -> Option<f64> {
        let along = crate::tensor_poly::dot(x.row(slot), v);
        let mut scratch = LineScratch::default();
        scratch.norms.resize(q.degree(), 0.0);
        let df = d as f64;
        for j in 0..WELL_BEHAVED_GRID {
            let xi = line_grid_point(j, big_t);
            let value = q.line_profile_into(slot, xi - along, &mut scratch.coeffs, &mut scratch.norms);
            let p2 = value * value;
            let ok = scratch
                .norms
                .iter()
                .take(self.cfg.k)
                .enumerate()
                .all(|(idx, &n2)| n2 <= 3.0 * df.powf(-self.cfg.c_g * (idx + 1) as f64) * p2);
            if ok {
                return Some(xi);
            }
        }
        None
    }

    /// Central difference estimate of `D^t_{slot,v} h` at `X`.
    pub fn dir_deriv_h_fd(
        &self,
        p: &Polynomial,
        x: &SampleMatrix,
        v: &[f64],
        slot: usize,
        t: usize,
        step: f64,
    ) -> Result<FdEstimate> {
        if slot >= p.n() {
            return Err(contract(format!("slot {slot} out of range for n = {}", p.n())));
        }
        let q = DirectionalRestriction::new(p, x, v)?;
        self.fd_on_line(&q, p.d(), slot, 0.0, t, step, &mut LineScratch::default())
    }

    /// As [`Self::dir_deriv_h_fd`], centred at offset `xi` along the line.
    #[allow(clippy::too_many_arguments)]
    pub fn fd_on_line(
        &self,
        q: &DirectionalRestriction,
        d: usize,
        slot: usize,
        xi: f64,
        t: usize,
        step: f64,
        scratch: &mut LineScratch,
    ) -> Result<FdEstimate> {
        check_fd_args(t, step)?;
        let reach = fd_reach(t);
        let mut hv = [0.0; 5];
        for (o, slot_h) in hv.iter_mut().enumerate() {
            let k = o as i32 - 2;
            if k.unsigned_abs() as usize <= reach {
                *slot_h = self.h_on_line(q, d, slot, xi + k as f64 * step, scratch);
            }
        }
        let line = q.line_polynomial(slot);
        let discontinuity = sign_changes(&line, xi - reach as f64 * step, xi + reach as f64 * step);
        Ok(FdEstimate { value: fd_combine(t, &hv, step), discontinuity })
    }
}

/// Reusable buffers for evaluations along a line.
#[derive(Debug, Clone, Default)]
pub struct LineScratch {
    coeffs: Vec<f64>,
    norms: Vec<f64>,
}

pub(crate) fn check_fd_args(t: usize, step: f64) -> Result<()> {
    if !(1..=4).contains(&t) {
        return Err(contract(format!("finite-difference order {t} must be in 1..=4")));
    }
    if !(step > 0.0) {
        return Err(contract("finite-difference step must be positive"));
    }
    Ok(())
}

/// Half-width of the order-`t` stencil in steps.
pub(crate) fn fd_reach(t: usize) -> usize {
    if t <= 2 {
        1
    } else {
        2
    }
}

/// Central differences from `h` at offsets `-2..=2` steps.
pub(crate) fn fd_combine(t: usize, h: &[f64; 5], step: f64) -> f64 {
    let [m2, m1, z, p1, p2] = *h;
    match t {
        1 => (p1 - m1) / (2.0 * step),
        2 => (p1 - 2.0 * z + m1) / (step * step),
        3 => (p2 - 2.0 * p1 + 2.0 * m1 - m2) / (2.0 * step.powi(3)),
        _ => (p2 - 4.0 * p1 + 6.0 * z - 4.0 * m1 + m2) / step.powi(4),
    }
}

/// Grid point `j` of the 401-point grid on `[-big_t, big_t]`.
pub fn line_grid_point(j: usize, big_t: f64) -> f64 {
    -big_t + 2.0 * big_t * j as f64 / (WELL_BEHAVED_GRID - 1) as f64
}

const SIGN_SCAN_POINTS: usize = 64;

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Whether the univariate `line` changes sign (in the `u >= 0` sense) on a fine grid of `[lo, hi]`.
pub(crate) fn sign_changes(line: &[f64], lo: f64, hi: f64) -> bool {
    let first = horner(line, lo) >= 0.0;
    (1..=SIGN_SCAN_POINTS).any(|j| {
        let s = lo + (hi - lo) * j as f64 / SIGN_SCAN_POINTS as f64;
        (horner(line, s) >= 0.0) != first
    })
}

pub fn mollifier_g(p: &Polynomial, x: &SampleMatrix, v: &[f64], cfg: &MollifierConfig) -> Result<f64> {
    Mollifier::new(*cfg)?.g(p, x, v)
}

pub fn mollified_ptf_h(p: &Polynomial, x: &SampleMatrix, v: &[f64], cfg: &MollifierConfig) -> Result<f64> {
    Mollifier::new(*cfg)?.h(p, x, v)
}

pub fn well_behaved(
    p: &Polynomial,
    x: &SampleMatrix,
    v: &[f64],
    slot: usize,
    big_t: f64,
    cfg: &MollifierConfig,
) -> Result<Option<f64>> {
    Mollifier::new(*cfg)?.well_behaved(p, x, v, slot, big_t)
}

#[allow(clippy::too_many_arguments)]
pub fn dir_deriv_h_fd(
    p: &Polynomial,
    x: &SampleMatrix,
    v: &[f64],
    slot: usize,
    t: usize,
    step: f64,
    cfg: &MollifierConfig,
) -> Result<FdEstimate> {
    Mollifier::new(*cfg)?.dir_deriv_h_fd(p, x, v, slot, t, step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::sample_unit_sphere;
    use crate::rng::{stream, TAG_DIRECTION, TAG_POINTS, TAG_POLY};

    fn cfg(k: usize) -> MollifierConfig {
        MollifierConfig::new(0.2, k).unwrap()
    }

    fn linear_along(v: &[f64], n: usize, slot: usize) -> Polynomial {
        let d = v.len();
        let mut c = vec![0.0; n * d];
        c[slot * d..(slot + 1) * d].copy_from_slice(v);
        Polynomial::linear(n, d, &c).unwrap()
    }

    #[test]
    fn constant_polynomial() {
        let p = Polynomial::constant(2, 3, 5.0);
        let x = SampleMatrix::gaussian(2, 3, &mut stream(1, TAG_POINTS, 0));
        let v = [1.0, 0.0, 0.0];
        assert_eq!(mollifier_g(&p, &x, &v, &cfg(2)).unwrap(), 1.0);
        assert_eq!(mollified_ptf_h(&p, &x, &v, &cfg(2)).unwrap(), 1.0);
        assert!(well_behaved(&p, &x, &v, 0, 1.0, &cfg(2)).unwrap().is_some());
        for t in 1..=4 {
            assert_eq!(dir_deriv_h_fd(&p, &x, &v, 1, t, 1e-3, &cfg(2)).unwrap().value, 0.0);
        }
        let neg = Polynomial::constant(2, 3, -5.0);
        assert_eq!(mollified_ptf_h(&neg, &x, &v, &cfg(2)).unwrap(), 0.0);
    }

    #[test]
    fn plateau_and_zero_region_of_g() {
        let v = [0.6, 0.8];
        let p = linear_along(&v, 1, 0);
        let m = Mollifier::new(cfg(1)).unwrap();
        // p(X) = v·x = 10, ‖p^{[1]}‖ = 1, argument 2^0.2/100 < 1.
        let x = SampleMatrix::from_rows(&[vec![6.0, 8.0]]).unwrap();
        assert_eq!(m.g(&p, &x, &v).unwrap(), 1.0);
        // p(X) = 0.1: argument 2^0.2 * 100 >= 3.
        let x = SampleMatrix::from_rows(&[vec![0.06, 0.08]]).unwrap();
        assert_eq!(m.g(&p, &x, &v).unwrap(), 0.0);
        let x = SampleMatrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert_eq!(m.g(&p, &x, &v).unwrap(), 0.0);
        assert_eq!(m.h(&p, &x, &v).unwrap(), 0.0);
    }

    #[test]
    fn linear_form_has_no_witness_near_its_zero() {
        let v = [0.6, 0.8];
        let p = linear_along(&v, 2, 1);
        let x = SampleMatrix::from_rows(&[vec![0.3, 0.1], vec![1.0, -2.0]]).unwrap();
        assert_eq!(well_behaved(&p, &x, &v, 1, 0.5, &cfg(1)).unwrap(), None);
        // With a wide interval the far end works.
        let w = well_behaved(&p, &x, &v, 1, 3.0, &cfg(1)).unwrap().unwrap();
        assert!(w.abs() > 0.6);
    }

    #[test]
    fn sandwich_and_agreement_under_decay() {
        let m = Mollifier::new(cfg(3)).unwrap();
        let p = Polynomial::random_isotropic(2, 4, 3, &mut stream(3, TAG_POLY, 0)).unwrap();
        for trial in 0..500 {
            let x = SampleMatrix::gaussian(2, 4, &mut stream(3, TAG_POINTS, trial));
            let v = sample_unit_sphere(4, &mut stream(3, TAG_DIRECTION, trial));
            let q = DirectionalRestriction::new(&p, &x, &v).unwrap();
            let h = m.h(&p, &x, &v).unwrap();
            let sign = if q.value() >= 0.0 { 1.0 } else { 0.0 };
            assert!((0.0..=sign).contains(&h));
            let strict = (1..=3).all(|t| q.norm_sq(t) <= 4f64.powf(-0.2 * t as f64) * q.value().powi(2));
            if strict {
                assert_eq!(h, sign);
            }
        }
    }

    #[test]
    fn first_order_richardson() {
        let m = Mollifier::new(cfg(2)).unwrap();
        let v = [1.0, 0.0];
        // p = x_11^2 - 1 restricted: q(s) = (x + s)^2 - 1, g transitions near |x| ~ 1.
        let p = Polynomial::from_terms(1, 2, 2, [(vec![0, 0], 1.0), (vec![], -0.5)]).unwrap();
        let x = SampleMatrix::from_rows(&[vec![1.9, 0.3]]).unwrap();
        let a = m.dir_deriv_h_fd(&p, &x, &v, 0, 1, 1e-3).unwrap();
        let b = m.dir_deriv_h_fd(&p, &x, &v, 0, 1, 5e-4).unwrap();
        assert!(!a.discontinuity);
        assert!(a.value.abs() > 1e-3, "probe should sit on the transition: {}", a.value);
        assert!((a.value - b.value).abs() < 1e-3 * a.value.abs().max(1.0));
        let c = m.dir_deriv_h_fd(&p, &SampleMatrix::from_rows(&[vec![std::f64::consts::FRAC_1_SQRT_2 - 7e-6, 0.0]]).unwrap(), &v, 0, 2, 1e-3).unwrap();
        assert!(c.discontinuity);
    }

    #[test]
    fn config_validation() {
        assert!(MollifierConfig::new(0.5, 2).is_err());
        assert!(MollifierConfig::new(0.0, 2).is_err());
        let mut c = cfg(2);
        c.rho_table_step = 1e-2;
        assert!(Mollifier::new(c).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn h_is_sandwiched_by_the_indicator(seed in any::<u64>(), n in 1usize..=2, d in 1usize..=6, k in 1usize..=3) {
                let p = Polynomial::random_isotropic(n, d, k, &mut stream(seed, TAG_POLY, 0)).unwrap();
                let x = SampleMatrix::gaussian(n, d, &mut stream(seed, TAG_POINTS, 0));
                let v = sample_unit_sphere(d, &mut stream(seed, TAG_DIRECTION, 0));
                let h = mollified_ptf_h(&p, &x, &v, &MollifierConfig::new(0.2, k).unwrap()).unwrap();
                let indicator = if p.eval(&x).unwrap() >= 0.0 { 1.0 } else { 0.0 };
                prop_assert!((0.0..=indicator).contains(&h), "h = {h}, indicator {indicator}");
            }
        }
    }
}
