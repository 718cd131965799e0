//! One-dimensional gap problem: an atom at 0 versus an atom at delta, both
//! diluted by Gaussian noise of weight eps. Exact low-degree advantage from
//! the moment quadratic forms, and the threshold test that solves it anyway.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, LabError, Result};
use crate::rng::{stream, LabRng, TAG_ALT, TAG_NULL};
use crate::stats::{gaussian_moment, normal_cdf};
use crate::tensor_poly::BatchEvaluator;

/// Largest moment order [`gap_mixture_moment`] accepts.
pub const MAX_GAP_MOMENT: u32 = 40;
/// Cap on `(k+1)^n`.
pub const MAX_BASIS_PRODUCT: u64 = 10_000;
/// Eigenvalues below this fraction of the largest are treated as zero.
pub const PINV_RELATIVE_CUTOFF: f64 = 1e-10;
/// Eigenvalues below `-NEGATIVE_EIGEN_TOL * max(1, largest)` are a conditioning error.
pub const NEGATIVE_EIGEN_TOL: f64 = 1e-8;
const GOLDEN_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GapComponent {
    Null,
    Alt(f64),
}

/// `E[x^t]` under `(1 - eps) delta_loc + eps N(0, 1)`.
pub fn gap_mixture_moment(component: GapComponent, eps: f64, t: u32) -> Result<f64> {
    if t > MAX_GAP_MOMENT {
        return Err(LabError::Capability(format!("moment order t <= {MAX_GAP_MOMENT}")));
    }
    let loc = match component {
        GapComponent::Null => 0.0,
        GapComponent::Alt(delta) => delta,
    };
    Ok((1.0 - eps) * loc.powi(t as i32) + eps * gaussian_moment(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapProblem {
    pub eps: f64,
    pub delta: f64,
    pub n: usize,
    pub k: usize,
}

impl GapProblem {
    /// `eps` in (0, 1); `delta` in [0, 1) so the identical-hypotheses case stays expressible.
    pub fn new(eps: f64, delta: f64, n: usize, k: usize) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(contract(format!("eps = {eps} must lie in (0, 1)")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(contract(format!("delta = {delta} must lie in [0, 1)")));
        }
        if n == 0 || k == 0 {
            return Err(contract("n and k must be >= 1"));
        }
        Ok(GapProblem { eps, delta, n, k })
    }

    /// `sqrt(k^n eps^{-n} k^3 n) * delta`.
    pub fn precondition_lhs(&self) -> f64 {
        let (k, n) = (self.k as f64, self.n as f64);
        (k.powf(n) * self.eps.powf(-n) * k.powi(3) * n).sqrt() * self.delta
    }

    pub fn precondition_holds(&self, gamma: f64) -> bool {
        self.precondition_lhs() <= gamma
    }

    /// Largest delta meeting the precondition at `gamma`.
    pub fn max_delta(eps: f64, n: usize, k: usize, gamma: f64) -> f64 {
        let (kf, nf) = (k as f64, n as f64);
        gamma / (kf.powf(nf) * eps.powf(-nf) * kf.powi(3) * nf).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageResult {
    /// `sqrt(dmu^T Sigma_null^+ dmu)`.
    pub gamma_null_variant: f64,
    /// `min_lambda sqrt(dmu^T (lambda Sigma_null + (1 - lambda) Sigma_alt)^+ dmu)`.
    pub gamma_max_variant: f64,
    pub lambda: f64,
    /// `(Sigma_lambda)^+ dmu` in the basis below.
    pub optimizer_coeffs: Vec<f64>,
    /// Advantage of the optimizer recomputed from its own means and variances.
    pub gamma_at_optimizer: f64,
    /// Per-sample exponents of each basis monomial.
    pub basis_descriptor: Vec<Vec<u32>>,
}

/// Exponent vectors `a` in `N^n` with `|a| <= k`, graded then lexicographic.
pub fn total_degree_basis(n: usize, k: usize) -> Vec<Vec<u32>> {
    fn rec(n: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == n {
            if left == 0 {
                out.push(cur.clone());
            }
            return;
        }
        for e in (0..=left).rev() {
            cur.push(e);
            rec(n, left - e, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for deg in 0..=k as u32 {
        rec(n, deg, &mut Vec::with_capacity(n), &mut out);
    }
    out
}

/// Means and covariance of the basis under the product law with per-sample moments `m`.
fn moment_forms(basis: &[Vec<u32>], m: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let b = basis.len();
    let mu = DVector::from_iterator(b, basis.iter().map(|a| a.iter().map(|&e| m[e as usize]).product()));
    let sigma = DMatrix::from_fn(b, b, |i, j| {
        let second: f64 = basis[i].iter().zip(&basis[j]).map(|(x, y)| m[(x + y) as usize]).product();
        second - mu[i] * mu[j]
    });
    (mu, sigma)
}

/// `(v^T S^+ v, S^+ v)` through a symmetric eigendecomposition.
pub fn pinv_quadratic(s: &DMatrix<f64>, v: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    let eig = SymmetricEigen::new(s.clone());
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
    let floor = -NEGATIVE_EIGEN_TOL * top.max(1.0);
    if let Some(bad) = eig.eigenvalues.iter().find(|&&e| e < floor) {
        return Err(LabError::Conditioning(format!("covariance eigenvalue {bad:e} is negative")));
    }
    let cutoff = PINV_RELATIVE_CUTOFF * top;
    let mut sol = DVector::zeros(v.len());
    let mut quad = 0.0;
    for (i, &e) in eig.eigenvalues.iter().enumerate() {
        if e <= cutoff {
            continue;
        }
        let u = eig.eigenvectors.column(i);
        let proj = u.dot(v);
        quad += proj * proj / e;
        sol += u * (proj / e);
    }
    Ok((quad, sol))
}

/// Both advantage variants from exact means and covariances.
pub fn advantage_from_moments(
    dmu: &DVector<f64>,
    sigma_null: &DMatrix<f64>,
    sigma_alt: &DMatrix<f64>,
) -> Result<(f64, f64, f64, DVector<f64>)> {
    let gamma_null = pinv_quadratic(sigma_null, dmu)?.0.sqrt();
    let f = |lambda: f64| -> Result<f64> {
        let mix = sigma_null * lambda + sigma_alt * (1.0 - lambda);
        Ok(pinv_quadratic(&mix, dmu)?.0.sqrt())
    };
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    while hi - lo > GOLDEN_TOL {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2)?;
        }
    }
    let mid = 0.5 * (lo + hi);
    let mut best = (mid, f(mid)?);
    for end in [0.0, 1.0] {
        let fe = f(end)?;
        if fe < best.1 {
            best = (end, fe);
        }
    }
    let mix = sigma_null * best.0 + sigma_alt * (1.0 - best.0);
    let coeffs = pinv_quadratic(&mix, dmu)?.1;
    Ok((gamma_null, best.1, best.0, coeffs))
}

/// `|c . dmu| / max(sqrt(c^T S0 c), sqrt(c^T S1 c))`.
pub fn advantage_of(c: &DVector<f64>, dmu: &DVector<f64>, s0: &DMatrix<f64>, s1: &DMatrix<f64>) -> f64 {
    let v0 = (c.transpose() * s0 * c)[(0, 0)].max(0.0);
    let v1 = (c.transpose() * s1 * c)[(0, 0)].max(0.0);
    let denom = v0.max(v1).sqrt();
    if denom == 0.0 {
        return 0.0;
    }
    c.dot(dmu).abs() / denom
}

/// Exact means, covariances and advantages for a gap problem.
pub struct GapForms {
    pub basis: Vec<Vec<u32>>,
    pub dmu: DVector<f64>,
    pub sigma_null: DMatrix<f64>,
    pub sigma_alt: DMatrix<f64>,
}

pub fn gap_forms(problem: &GapProblem) -> Result<GapForms> {
    let product = (problem.k as u64 + 1).checked_pow(problem.n as u32).unwrap_or(u64::MAX);
    if product > MAX_BASIS_PRODUCT {
        return Err(LabError::Capability(format!("(k+1)^n = {product} exceeds {MAX_BASIS_PRODUCT}")));
    }
    let basis = total_degree_basis(problem.n, problem.k);
    let moments = |c: GapComponent| -> Result<Vec<f64>> {
        (0..=2 * problem.k as u32).map(|t| gap_mixture_moment(c, problem.eps, t)).collect()
    };
    let (mu0, sigma_null) = moment_forms(&basis, &moments(GapComponent::Null)?);
    let (mu1, sigma_alt) = moment_forms(&basis, &moments(GapComponent::Alt(problem.delta))?);
    Ok(GapForms { basis, dmu: mu0 - mu1, sigma_null, sigma_alt })
}

/// Best advantage over degree-k polynomials in the n samples, both variance conventions.
pub fn best_ldp_advantage(problem: &GapProblem) -> Result<AdvantageResult> {
    let forms = gap_forms(problem)?;
    let (gamma_null, gamma_max, lambda, coeffs) =
        advantage_from_moments(&forms.dmu, &forms.sigma_null, &forms.sigma_alt)?;
    Ok(AdvantageResult {
        gamma_null_variant: gamma_null,
        gamma_max_variant: gamma_max,
        lambda,
        gamma_at_optimizer: advantage_of(&coeffs, &forms.dmu, &forms.sigma_null, &forms.sigma_alt),
        optimizer_coeffs: coeffs.iter().copied().collect(),
        basis_descriptor: forms.basis,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdErrors {
    pub null_error: f64,
    pub alt_error: f64,
}

/// Errors of the one-sample test `1{x > delta/2}`.
pub fn threshold_test_errors(eps: f64, delta: f64) -> Result<ThresholdErrors> {
    if !(delta > 0.0) {
        return Err(contract(format!("delta = {delta} must be positive")));
    }
    let half = normal_cdf(delta / 2.0);
    Ok(ThresholdErrors { null_error: eps * (1.0 - half), alt_error: eps * half })
}

/// One scalar draw from the null or alternative gap law.
pub fn sample_gap<R: Rng + ?Sized>(component: GapComponent, eps: f64, rng: &mut R) -> f64 {
    if rng.random::<f64>() < eps {
        rng.sample(StandardNormal)
    } else {
        match component {
            GapComponent::Null => 0.0,
            GapComponent::Alt(delta) => delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McAdvantage {
    pub estimate: f64,
    pub stderr: f64,
    pub mean_null: f64,
    pub mean_alt: f64,
    pub sd_null: f64,
    pub sd_alt: f64,
    pub draws: u64,
}

const MC_CHUNK: u64 = 4096;

struct Moments4 {
    mean: f64,
    var: f64,
    m3: f64,
    m4: f64,
}

fn moments_of<S>(p: &dyn BatchEvaluator, sampler: &S, draws: u64, seed: u64, tag: u64) -> Result<Moments4>
where
    S: Fn(&mut LabRng, &mut [f64]) -> Result<()> + Sync,
{
    let nv = p.nvars();
    let chunks = draws.div_ceil(MC_CHUNK);
    let values: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Vec<f64>> {
            let len = (draws - c * MC_CHUNK).min(MC_CHUNK) as usize;
            let mut rng = stream(seed, tag, c);
            let mut pts = vec![0.0; len * nv];
            for row in pts.chunks_exact_mut(nv) {
                sampler(&mut rng, row)?;
            }
            let mut out = vec![0.0; len];
            p.eval_batch(&pts, &mut out);
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?
        .concat();
    let nf = values.len() as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let central = |k: i32| values.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / nf;
    Ok(Moments4 { mean, var: central(2), m3: central(3), m4: central(4) })
}

/// Monte Carlo advantage `|E_null p - E_alt p| / max(sd_null, sd_alt)` with a
/// delta-method standard error. Each sampler fills one point of length `p.nvars()`.
pub fn ldp_advantage_mc<S0, S1>(
    p: &dyn BatchEvaluator,
    null_sampler: S0,
    alt_sampler: S1,
    draws: u64,
    seed: u64,
) -> Result<McAdvantage>
where
    S0: Fn(&mut LabRng, &mut [f64]) -> Result<()> + Sync,
    S1: Fn(&mut LabRng, &mut [f64]) -> Result<()> + Sync,
{
    if draws < 1000 {
        return Err(contract("Monte Carlo advantage needs at least 1000 draws"));
    }
    let a = moments_of(p, &null_sampler, draws, seed, TAG_NULL)?;
    let b = moments_of(p, &alt_sampler, draws, seed, TAG_ALT)?;
    let scale = a.mean.abs().max(b.mean.abs()).max(1.0);
    if a.var <= 1e-24 * scale * scale && b.var <= 1e-24 * scale * scale {
        return Err(LabError::DegeneratePolynomial);
    }
    let nf = draws as f64;
    let diff = a.mean - b.mean;
    // Delta method on |D| / sqrt(V_big); D moves with mean_big in direction `side`.
    let (big, other_var, side) = if a.var >= b.var { (&a, b.var, 1.0) } else { (&b, a.var, -1.0) };
    let sd = big.var.sqrt();
    let estimate = diff.abs() / sd;
    let g_mean = diff.signum() / sd;
    let g_var = -0.5 * diff.abs() / (sd * big.var);
    let var_var = (big.m4 - big.var * big.var).max(0.0) / nf;
    let se2 = g_mean * g_mean * (big.var + other_var) / nf
        + g_var * g_var * var_var
        + 2.0 * side * g_mean * g_var * big.m3 / nf;
    Ok(McAdvantage {
        estimate,
        stderr: se2.max(0.0).sqrt(),
        mean_null: a.mean,
        mean_alt: b.mean,
        sd_null: a.var.sqrt(),
        sd_alt: b.var.sqrt(),
        draws,
    })
}

/// A one-variable-per-sample polynomial given by basis exponents and coefficients.
pub struct ExponentPolynomial {
    pub basis: Vec<Vec<u32>>,
    pub coeffs: Vec<f64>,
}

impl BatchEvaluator for ExponentPolynomial {
    fn nvars(&self) -> usize {
        self.basis.first().map_or(0, |a| a.len())
    }

    fn eval_batch(&self, points: &[f64], out: &mut [f64]) {
        let n = self.nvars();
        for (o, x) in out.iter_mut().zip(points.chunks_exact(n)) {
            *o = self
                .basis
                .iter()
                .zip(&self.coeffs)
                .map(|(a, c)| c * a.iter().zip(x).map(|(&e, xv)| xv.powi(e as i32)).product::<f64>())
                .sum();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationRow {
    pub method: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub problem: GapProblem,
    pub target_gamma: f64,
    pub precondition_lhs: f64,
    pub precondition_holds: bool,
    pub advantage: AdvantageResult,
    pub threshold: ThresholdErrors,
    /// `(best low-degree advantage, threshold-test error sum)`.
    pub rows: Vec<SeparationRow>,
}

/// The gap problem at the largest delta meeting the no-advantage precondition for `gamma`.
pub fn gap_separation(eps: f64, n: usize, k: usize, gamma: f64) -> Result<SeparationReport> {
    gap_separation_at(eps, n, k, GapProblem::max_delta(eps, n, k, gamma), gamma)
}

/// Best low-degree advantage next to the threshold test's errors at a given delta.
pub fn gap_separation_at(eps: f64, n: usize, k: usize, delta: f64, gamma: f64) -> Result<SeparationReport> {
    let problem = GapProblem::new(eps, delta, n, k)?;
    let advantage = best_ldp_advantage(&problem)?;
    let threshold = threshold_test_errors(eps, delta)?;
    let rows = vec![
        SeparationRow { method: "best_ldp_advantage".into(), value: advantage.gamma_null_variant },
        SeparationRow { method: "threshold_test_error_sum".into(), value: threshold.null_error + threshold.alt_error },
    ];
    Ok(SeparationReport {
        problem,
        target_gamma: gamma,
        precondition_lhs: problem.precondition_lhs(),
        precondition_holds: problem.precondition_holds(gamma),
        advantage,
        threshold,
        rows,
    })
}
