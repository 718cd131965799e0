//! Probabilist's Hermite polynomials.
//!
//! `h_n(x) = sqrt(n!) * sum_j (-1)^j x^(n-2j) / (j! (n-2j)! 2^j)` is the unit-norm
//! family under N(0,1); the monic family `He_n` drops the `sqrt(n!)` rescaling.
//! Multivariate `h_J(x)` is the product of univariate factors.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{contract, LabError, Result};

/// Degrees up to this value are supported without overflow in `sqrt(n!)`.
pub const MAX_SUPPORTED_DEGREE: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HermiteBasisSpec {
    pub max_degree: usize,
    pub normalized: bool,
}

impl HermiteBasisSpec {
    pub fn normalized(max_degree: usize) -> Self {
        HermiteBasisSpec { max_degree, normalized: true }
    }

    pub fn monic(max_degree: usize) -> Self {
        HermiteBasisSpec { max_degree, normalized: false }
    }
}

/// Coefficient tables for every degree up to `spec.max_degree`.
#[derive(Debug, Clone)]
pub struct HermiteBasis {
    spec: HermiteBasisSpec,
    /// `coeffs[n][j]` multiplies `x^(n-2j)`.
    coeffs: Vec<Vec<f64>>,
}

impl HermiteBasis {
    pub fn new(spec: HermiteBasisSpec) -> Result<Self> {
        if spec.max_degree > MAX_SUPPORTED_DEGREE {
            return Err(LabError::Capability(format!(
                "max_degree {} exceeds supported {}",
                spec.max_degree, MAX_SUPPORTED_DEGREE
            )));
        }
        let coeffs = (0..=spec.max_degree).map(|n| coefficient_row(n, spec.normalized)).collect();
        Ok(HermiteBasis { spec, coeffs })
    }

    pub fn spec(&self) -> HermiteBasisSpec {
        self.spec
    }

    /// Coefficients of `x^(n-2j)`, j = 0..=n/2.
    pub fn coefficients(&self, n: usize) -> &[f64] {
        &self.coeffs[n]
    }

    pub fn eval(&self, k: usize, x: f64) -> Result<f64> {
        if k > self.spec.max_degree {
            return Err(LabError::Capability(format!(
                "degree {k} above basis max_degree {}",
                self.spec.max_degree
            )));
        }
        Ok(horner_even_odd(&self.coeffs[k], k, x))
    }

    pub fn multi_eval(&self, j: &[usize], x: &[f64]) -> Result<f64> {
        if j.len() != x.len() {
            return Err(contract(format!("multi-index length {} vs point length {}", j.len(), x.len())));
        }
        let mut acc = 1.0;
        for (&deg, &xi) in j.iter().zip(x) {
            acc *= self.eval(deg, xi)?;
        }
        Ok(acc)
    }
}

/// Ratio recurrence on the rational part, then one multiplication by `sqrt(n!)` or `n!`.
fn coefficient_row(n: usize, normalized: bool) -> Vec<f64> {
    let ln_fact: f64 = (1..=n).map(|i| (i as f64).ln()).sum();
    let lead = if normalized { (-0.5 * ln_fact).exp() } else { 1.0 };
    let mut row = Vec::with_capacity(n / 2 + 1);
    let mut c = lead;
    row.push(c);
    for j in 0..n / 2 {
        let a = (n - 2 * j) as f64;
        c = -c * a * (a - 1.0) / (2.0 * (j + 1) as f64);
        row.push(c);
    }
    row
}

fn horner_even_odd(row: &[f64], n: usize, x: f64) -> f64 {
    let y = x * x;
    let mut acc = 0.0;
    for &c in row {
        acc = acc * y + c;
    }
    if n % 2 == 1 {
        acc * x
    } else {
        acc
    }
}

pub fn hermite_eval(k: usize, x: f64, spec: HermiteBasisSpec) -> Result<f64> {
    if k > spec.max_degree {
        return Err(LabError::Capability(format!("degree {k} above basis max_degree {}", spec.max_degree)));
    }
    if k > MAX_SUPPORTED_DEGREE {
        return Err(LabError::Capability(format!("degree {k} exceeds supported {MAX_SUPPORTED_DEGREE}")));
    }
    Ok(horner_even_odd(&coefficient_row(k, spec.normalized), k, x))
}

pub fn hermite_multi_eval(j: &[usize], x: &[f64], spec: HermiteBasisSpec) -> Result<f64> {
    if j.len() != x.len() {
        return Err(contract(format!("multi-index length {} vs point length {}", j.len(), x.len())));
    }
    j.iter().zip(x).try_fold(1.0, |acc, (&deg, &xi)| Ok(acc * hermite_eval(deg, xi, spec)?))
}

/// Gauss-Hermite rule for the N(0,1) measure: nodes and weights summing to 1.
///
/// Golub-Welsch eigenvalues seed a Newton polish on the three-term recurrence;
/// weights use `w_i = 1 / (q h_{q-1}(x_i)^2)`.
pub fn gauss_hermite_rule(q: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(q >= 1, "quadrature needs at least one node");
    if q == 1 {
        return (vec![0.0], vec![1.0]);
    }
    let mut jac = DMatrix::<f64>::zeros(q, q);
    for i in 1..q {
        let b = (i as f64).sqrt();
        jac[(i, i - 1)] = b;
        jac[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.total_cmp(b));
    let mut weights = Vec::with_capacity(q);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (hq, hq1) = normalized_pair(q, *x);
            // d/dx h_q = sqrt(q) h_{q-1}
            let step = hq / ((q as f64).sqrt() * hq1);
            *x -= step;
            if step.abs() < 1e-15 * x.abs().max(1.0) {
                break;
            }
        }
        let (_, hq1) = normalized_pair(q, *x);
        weights.push(1.0 / (q as f64 * hq1 * hq1));
    }
    (nodes, weights)
}

/// (h_q(x), h_{q-1}(x)) by the normalized three-term recurrence.
fn normalized_pair(q: usize, x: f64) -> (f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    for n in 0..q {
        let next = (x * cur - (n as f64).sqrt() * prev) / ((n + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

/// Matrix of `|<h_a, h_b> - 1(a=b)|` under N(0,1), computed with a `quad_nodes`-point rule.
pub fn hermite_orthonormality_residual(k_max: usize, quad_nodes: usize) -> Result<DMatrix<f64>> {
    if quad_nodes == 0 {
        return Err(contract("quadrature needs at least one node"));
    }
    let basis = HermiteBasis::new(HermiteBasisSpec::normalized(k_max))?;
    let (nodes, weights) = gauss_hermite_rule(quad_nodes);
    let values: Vec<Vec<f64>> =
        nodes.iter().map(|&x| (0..=k_max).map(|a| basis.eval(a, x).unwrap()).collect()).collect();
    let mut out = DMatrix::<f64>::zeros(k_max + 1, k_max + 1);
    for a in 0..=k_max {
        for b in 0..=k_max {
            let ip: f64 = values.iter().zip(&weights).map(|(v, w)| w * v[a] * v[b]).sum();
            let target = if a == b { 1.0 } else { 0.0 };
            out[(a, b)] = (ip - target).abs();
        }
    }
    Ok(out)
}

/// Partitions of `k` into at most `max_parts` positive parts, largest first.
pub fn partitions(k: usize, max_parts: usize) -> Vec<Vec<usize>> {
    fn rec(rest: usize, cap: usize, parts_left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest == 0 {
            out.push(cur.clone());
            return;
        }
        if parts_left == 0 {
            return;
        }
        for part in (1..=cap.min(rest)).rev() {
            cur.push(part);
            rec(rest - part, part, parts_left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, k, max_parts, &mut Vec::new(), &mut out);
    out
}

/// Sample points `delta` in `(0, min(1/2, k^-c0))`: the open upper end and a geometric ladder below it.
pub fn claim_a1_deltas(k: usize, c0: u32) -> Vec<f64> {
    let top = 0.5f64.min((k as f64).powi(-(c0 as i32)));
    let hi = top * (1.0 - 1e-12);
    (0..40).map(|i| hi * 10f64.powf(-6.0 * i as f64 / 39.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimA1Calibration {
    /// Smallest tested exponent for which every check passed.
    pub c0: Option<u32>,
    pub max_k: usize,
    /// (exponent, all checks passed, worst |h_J(delta 1)| seen)
    pub trials: Vec<(u32, bool, f64)>,
}

/// Worst `|h_J(delta 1)|` over degree-k indices with at most k nonzero coordinates and the sampled deltas.
pub fn claim_a1_worst(k: usize, c0: u32, basis: &HermiteBasis) -> f64 {
    let mut worst = 0.0f64;
    for part in partitions(k, k) {
        for &delta in &claim_a1_deltas(k, c0) {
            let v: f64 = part.iter().map(|&a| basis.eval(a, delta).unwrap()).product();
            worst = worst.max(v.abs());
        }
    }
    worst
}

/// Smallest integer exponent `C0 <= max_c` such that `|h_J(delta 1)| < 1` for every
/// degree-k index (k = 1..=max_k, at most k coordinates) and every sampled `delta < k^-C0`.
pub fn calibrate_claim_a1(max_k: usize, max_c: u32) -> Result<ClaimA1Calibration> {
    let basis = HermiteBasis::new(HermiteBasisSpec::normalized(max_k))?;
    let mut trials = Vec::new();
    let mut c0 = None;
    for c in 0..=max_c {
        let worst = (1..=max_k).map(|k| claim_a1_worst(k, c, &basis)).fold(0.0, f64::max);
        let ok = worst < 1.0;
        trials.push((c, ok, worst));
        if ok {
            c0 = Some(c);
            break;
        }
    }
    Ok(ClaimA1Calibration { c0, max_k, trials })
}

/// Largest ratio `|h_a(delta 1_n) - h_a(0_n)| / (sqrt(k^3 n) delta)` over the given index and deltas.
pub fn claim_a3_ratio(a: &[usize], deltas: &[f64], basis: &HermiteBasis) -> Result<f64> {
    let k: usize = a.iter().sum();
    let n = a.len();
    let zero = vec![0.0; n];
    let base = basis.multi_eval(a, &zero)?;
    let mut worst = 0.0f64;
    for &delta in deltas {
        let at = vec![delta; n];
        let diff = (basis.multi_eval(a, &at)? - base).abs();
        let bound = ((k * k * k * n) as f64).sqrt() * delta;
        worst = worst.max(diff / bound);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> HermiteBasisSpec {
        HermiteBasisSpec::normalized(12)
    }

    #[test]
    fn low_degree_examples() {
        assert_eq!(hermite_eval(0, 1.7, spec()).unwrap(), 1.0);
        assert_eq!(hermite_eval(1, 2.0, spec()).unwrap(), 2.0);
        let h2 = hermite_eval(2, 0.0, spec()).unwrap();
        assert!((h2 + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn capability_error_above_max_degree() {
        let err = hermite_eval(5, 0.3, HermiteBasisSpec::normalized(4)).unwrap_err();
        assert!(matches!(err, LabError::Capability(_)));
        assert!(HermiteBasis::new(HermiteBasisSpec::normalized(61)).is_err());
    }

    #[test]
    fn coefficient_table_has_half_degree_plus_one_entries() {
        let b = HermiteBasis::new(spec()).unwrap();
        for n in 0..=12 {
            assert_eq!(b.coefficients(n).len(), n / 2 + 1);
            assert!(b.coefficients(n).iter().all(|c| *c != 0.0));
        }
    }

    #[test]
    fn monic_coefficients_are_integers() {
        let b = HermiteBasis::new(HermiteBasisSpec::monic(6)).unwrap();
        // He_6 = x^6 - 15x^4 + 45x^2 - 15
        assert_eq!(b.coefficients(6), &[1.0, -15.0, 45.0, -15.0]);
    }

    #[test]
    fn multi_eval_examples() {
        let s = spec();
        assert_eq!(hermite_multi_eval(&[0, 0, 0], &[0.3, -2.0, 9.0], s).unwrap(), 1.0);
        assert_eq!(hermite_multi_eval(&[1, 1], &[1.5, -0.25], s).unwrap(), 1.5 * -0.25);
        let v = hermite_multi_eval(&[2, 0], &[0.0, 5.3], s).unwrap();
        assert!((v + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(matches!(hermite_multi_eval(&[1, 1], &[1.0], s), Err(LabError::Contract(_))));
    }

    #[test]
    fn high_degree_has_finite_coefficients() {
        let b = HermiteBasis::new(HermiteBasisSpec::normalized(60)).unwrap();
        assert!(b.coefficients(60).iter().all(|c| c.is_finite()));
        assert!(b.eval(60, 0.5).unwrap().is_finite());
    }

    #[test]
    fn quadrature_weights_sum_to_one() {
        for q in [1, 2, 5, 20, 64] {
            let (_, w) = gauss_hermite_rule(q);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-13, "q={q}");
        }
    }

    #[test]
    fn residual_examples() {
        let r0 = hermite_orthonormality_residual(0, 5).unwrap();
        assert!(r0[(0, 0)] < 1e-12);
        let r = hermite_orthonormality_residual(2, 2).unwrap();
        assert!(r[(2, 2)] > 0.5);
        assert!(hermite_orthonormality_residual(3, 0).is_err());
    }

    #[test]
    fn partitions_count() {
        assert_eq!(partitions(4, 4).len(), 5);
        assert_eq!(partitions(10, 10).len(), 42);
        assert_eq!(partitions(4, 2).len(), 3);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn five_point(basis: &HermiteBasis, k: usize, x: f64) -> f64 {
            let h = 1e-4;
            let f = |s: f64| basis.eval(k, x + s * h).unwrap();
            (f(-2.0) - 8.0 * f(-1.0) + 8.0 * f(1.0) - f(2.0)) / (12.0 * h)
        }

        fn small_delta(k: usize, frac: f64) -> f64 {
            let c0 = calibrate_claim_a1(10, 6).unwrap().c0.expect("calibrated exponent");
            frac * 0.5f64.min((k as f64).powi(-(c0 as i32)))
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]

            #[test]
            fn monic_derivative_is_k_times_previous(k in 1usize..=8, x in -3.0f64..3.0) {
                let b = HermiteBasis::new(HermiteBasisSpec::monic(8)).unwrap();
                let want = k as f64 * b.eval(k - 1, x).unwrap();
                prop_assert!((five_point(&b, k, x) - want).abs() <= 1e-6);
            }

            #[test]
            fn normalized_derivative_is_sqrt_k_times_previous(k in 1usize..=8, x in -3.0f64..3.0) {
                let b = HermiteBasis::new(HermiteBasisSpec::normalized(8)).unwrap();
                let want = (k as f64).sqrt() * b.eval(k - 1, x).unwrap();
                prop_assert!((five_point(&b, k, x) - want).abs() <= 1e-6);
            }

            #[test]
            fn small_delta_products_stay_below_one(k in 1usize..=10, frac in 0.0f64..1.0) {
                let b = HermiteBasis::new(HermiteBasisSpec::normalized(10)).unwrap();
                let delta = small_delta(k, frac);
                for part in partitions(k, k) {
                    let v: f64 = part.iter().map(|&a| b.eval(a, delta).unwrap()).product();
                    prop_assert!(v.abs() < 1.0, "{part:?} at {delta}: {v}");
                }
            }

            #[test]
            fn shift_is_lipschitz_in_delta(a in prop::collection::vec(0usize..=3, 1..=3), frac in 1e-6f64..1.0) {
                let k: usize = a.iter().sum();
                prop_assume!(k >= 1);
                let b = HermiteBasis::new(HermiteBasisSpec::normalized(10)).unwrap();
                let ratio = claim_a3_ratio(&a, &[small_delta(k, frac)], &b).unwrap();
                prop_assert!(ratio <= 1.0 + 1e-12, "{a:?}: {ratio}");
            }
        }
    }
}
