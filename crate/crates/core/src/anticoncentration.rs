//! Gaussian and spherical moment tensors, and Monte Carlo checks of the
//! anti-concentration inequalities for Gaussian polynomials.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::sample_unit_sphere;
use crate::error::{contract, LabError, Result};
use crate::hermite::partitions;
use crate::rng::{derive_seed, stream, TAG_DIRECTION, TAG_POINTS, TAG_POLY};
use crate::stats::{double_factorial_odd, loglog_slope, median, Proportion};
use crate::tensor_poly::derivatives::for_each_sub_multiset;
use crate::tensor_poly::multiset::{factorial, for_each_multiset, permutation_count};
use crate::tensor_poly::tensor::checked_size;
use crate::tensor_poly::{
    grad_norms, top_order_norm, CubicContraction, DirectionalRestriction, JetKernel, LaneBlock, NormWorkspace, PenultimateGram,
    MultisetIndexer, Polynomial, SampleMatrix, DEFAULT_TENSOR_CAP, LANES,
};

/// Largest index list [`isserlis`] will enumerate matchings for.
pub const MAX_ISSERLIS_ORDER: usize = 12;
/// Largest order accepted by [`sphere_w_matrix_norm`].
pub const MAX_SPHERE_ORDER: usize = 4;
/// `|p(X)|` below this counts as a bound violation.
pub const VALUE_FLOOR: f64 = 1e-300;

/// `E[prod_j x_{i_j}]` for `x ~ N(0, cov)`: the sum over perfect matchings of covariance products.
pub fn isserlis(cov: &DMatrix<f64>, indices: &[usize]) -> Result<f64> {
    if !cov.is_square() {
        return Err(contract("covariance must be square"));
    }
    let dim = cov.nrows();
    let scale = cov.amax().max(1.0);
    for i in 0..dim {
        for j in 0..i {
            if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale {
                return Err(contract(format!("covariance is not symmetric at ({i}, {j})")));
            }
        }
    }
    if indices.len() > MAX_ISSERLIS_ORDER {
        return Err(LabError::Capability(format!("isserlis supports at most {MAX_ISSERLIS_ORDER} indices")));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= dim) {
        return Err(contract(format!("index {bad} out of range for dimension {dim}")));
    }
    if indices.len() % 2 == 1 {
        return Ok(0.0);
    }
    fn rec(cov: &DMatrix<f64>, rest: &mut Vec<usize>) -> f64 {
        if rest.is_empty() {
            return 1.0;
        }
        let first = rest.remove(0);
        let mut acc = 0.0;
        for pos in 0..rest.len() {
            let partner = rest.remove(pos);
            let c = cov[(first, partner)];
            if c != 0.0 {
                acc += c * rec(cov, rest);
            }
            rest.insert(pos, partner);
        }
        rest.insert(0, first);
        acc
    }
    Ok(rec(cov, &mut indices.to_vec()))
}

/// `E‖g‖^{2t} = prod_{i<t} (d + 2i)` for `g ~ N(0, I_d)`.
pub fn radial_moment(d: usize, t: usize) -> f64 {
    (0..t).map(|i| (d + 2 * i) as f64).product()
}

/// Frobenius norm of the flattened Gaussian moment matrix `E[(g^{⊗t})(g^{⊗t})^T]`.
///
/// Index tuples `(j_1..j_{2t})` are grouped by the multiplicity pattern of
/// their coordinates; only all-even patterns are nonzero, and each pattern's
/// entry is evaluated once by [`isserlis`] on the identity.
pub fn gaussian_moment_matrix_norm(d: usize, t: usize) -> Result<f64> {
    if d == 0 {
        return Err(contract("dimension must be positive"));
    }
    if t > MAX_SPHERE_ORDER {
        return Err(LabError::Capability(format!("moment order t <= {MAX_SPHERE_ORDER}")));
    }
    if t == 0 {
        return Ok(1.0);
    }
    let mut acc = 0.0;
    for halves in partitions(t, d) {
        let r = halves.len();
        let rep: Vec<usize> = halves.iter().enumerate().flat_map(|(c, &b)| std::iter::repeat_n(c, 2 * b)).collect();
        let entry = isserlis(&DMatrix::identity(r, r), &rep)?;
        // Distinct coordinates: falling factorial over repeated part sizes.
        let mut coords: f64 = (0..r).map(|i| (d - i) as f64).product();
        let mut i = 0;
        while i < r {
            let j = (i..r).take_while(|&j| halves[j] == halves[i]).count();
            coords /= factorial(j);
            i += j;
        }
        let arrangements = factorial(2 * t) / halves.iter().map(|&b| factorial(2 * b)).product::<f64>();
        acc += coords * arrangements * entry * entry;
    }
    Ok(acc.sqrt())
}

/// Exact `‖W‖_F` for `W = E_v[(v^{⊗t})(v^{⊗t})^T]`, `v` uniform on the sphere.
pub fn sphere_w_matrix_norm(d: usize, t: usize) -> Result<f64> {
    Ok(gaussian_moment_matrix_norm(d, t)? / radial_moment(d, t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereWPoint {
    pub d: usize,
    pub t: usize,
    pub norm: f64,
    pub gaussian_norm: f64,
    pub radial_moment: f64,
    /// `(2t-1)!! d^{-t/2}`.
    pub double_factorial_bound: f64,
    pub double_factorial_holds: bool,
    /// `(2t / (e sqrt d))^t`.
    pub closed_form_bound: f64,
    pub closed_form_holds: bool,
}

pub fn sphere_w_point(d: usize, t: usize) -> Result<SphereWPoint> {
    let gaussian_norm = gaussian_moment_matrix_norm(d, t)?;
    let radial = radial_moment(d, t);
    let norm = gaussian_norm / radial;
    let df = d as f64;
    let double_factorial_bound = double_factorial_odd(t as u32) * df.powf(-(t as f64) / 2.0);
    let closed_form_bound = (2.0 * t as f64 / (std::f64::consts::E * df.sqrt())).powi(t as i32);
    Ok(SphereWPoint {
        d,
        t,
        norm,
        gaussian_norm,
        radial_moment: radial,
        double_factorial_bound,
        double_factorial_holds: norm <= double_factorial_bound * (1.0 + 1e-12),
        closed_form_bound,
        closed_form_holds: norm <= closed_form_bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub d: usize,
    pub n: usize,
    pub k: usize,
    /// `None` when the event quantifies over every order `1..=k`.
    pub t: Option<usize>,
    pub eps: f64,
    pub trials: u64,
    /// Fraction of trials in which the tested event occurred.
    pub empirical_prob: Proportion,
    /// Per order `t = 1..=k`: median of `‖T_t‖_F / max(|p|, floor)`, where `T_t` is
    /// `∇^t p(X)` for the unrestricted check and `p^{[t],v}(X)` for the directional one.
    pub median_ratio: Vec<Option<f64>>,
    /// Per order: median of `‖p^{[t],v}(X)‖_F / ‖∇^t p(X)‖_F` (directional check only).
    pub median_contraction: Vec<Option<f64>>,
    /// Trials where some `‖p^{[t],v}‖ > ‖∇^t p‖`; must be zero.
    pub contraction_violations: u64,
    /// Log-log slope of the t = 1 median contraction against d over the sweep.
    pub slope_fit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowGrowthConfig {
    pub k: usize,
    pub n: usize,
    pub d: usize,
    pub eps: f64,
    pub trials: u64,
    pub seed: u64,
}

/// `‖∇^t p(X)‖ > (k^{3t} / eps^t) |p(X)|` for some `t` (or `|p|` below the floor).
pub fn slow_growth_fails(norms: &[f64], k: usize, eps: f64) -> bool {
    let value = norms[0].abs();
    if value < VALUE_FLOOR {
        return true;
    }
    let base = (k as f64).powi(3) / eps;
    (1..=k).any(|t| norms[t] > base.powi(t as i32) * value)
}

/// `‖∇^t p(X)‖` for `t = 0..=k` over the isotropic ensemble's fixed term
/// order: every draw shares the monomials, so the sub-multiset bookkeeping
/// of [`grad_norms`] is done once and each trial only scatters coefficients.
struct IsotropicNormPlan {
    n: usize,
    d: usize,
    k: usize,
    terms: usize,
    /// `(term, rank of the sub-multiset, falling-factorial factor, rest range)`.
    entries: Vec<(u32, u32, f64, u32, u32)>,
    rest: Vec<u32>,
    weights: Vec<f64>,
    offsets: Vec<usize>,
}

impl IsotropicNormPlan {
    fn new(n: usize, d: usize, k: usize) -> Result<Self> {
        let nvars = n * d;
        let indexer = MultisetIndexer::new(nvars, k);
        checked_size(indexer.len(), 1, DEFAULT_TENSOR_CAP)?;
        let mut entries = Vec::new();
        let mut rest = Vec::new();
        let mut term = 0u32;
        for r in 0..=k {
            for_each_multiset(nvars, r, |vars| {
                for t in 0..=r {
                    for_each_sub_multiset(vars, t, |sub, factor, left| {
                        let start = rest.len() as u32;
                        rest.extend_from_slice(left);
                        entries.push((term, indexer.rank(sub) as u32, factor, start, rest.len() as u32));
                    });
                }
                term += 1;
            });
        }
        let mut weights = vec![0.0; indexer.len()];
        for t in 0..=k {
            for m in indexer.multisets(t) {
                weights[indexer.rank(&m)] = permutation_count(&m);
            }
        }
        let offsets = (0..=k + 1).map(|t| indexer.offset(t)).collect();
        Ok(IsotropicNormPlan { n, d, k, terms: term as usize, entries, rest, weights, offsets })
    }

    /// Draw trial `i`'s coefficients (same stream and order as
    /// [`Polynomial::random_isotropic`]) and its point, and return the norms.
    fn trial(&self, seed: u64, i: u64, coeffs: &mut Vec<f64>, values: &mut Vec<f64>) -> Vec<f64> {
        let mut rng = stream(seed, TAG_POLY, i);
        coeffs.clear();
        coeffs.extend((0..self.terms).map(|_| -> f64 { rng.sample(StandardNormal) }));
        let x = SampleMatrix::gaussian(self.n, self.d, &mut stream(seed, TAG_POINTS, i));
        let xs = x.as_slice();
        values.clear();
        values.resize(self.weights.len(), 0.0);
        for &(term, rank, factor, lo, hi) in &self.entries {
            let mono: f64 = self.rest[lo as usize..hi as usize].iter().map(|&v| xs[v as usize]).product();
            values[rank as usize] += coeffs[term as usize] * factor * mono;
        }
        (0..=self.k)
            .map(|t| {
                (self.offsets[t]..self.offsets[t + 1]).map(|r| values[r] * values[r] * self.weights[r]).sum::<f64>().sqrt()
            })
            .collect()
    }
}

/// Failure fraction of the slow-growth inequality over fresh isotropic
/// polynomials and Gaussian inputs. Trial `i` draws its polynomial from
/// `(seed, TAG_POLY, i)` and its inputs from `(seed, TAG_POINTS, i)`.
pub fn empirical_fact_3_2(cfg: &SlowGrowthConfig) -> Result<DecayReport> {
    if cfg.k == 0 || cfg.trials == 0 || !(cfg.eps > 0.0) {
        return Err(contract("slow-growth check needs k >= 1, trials >= 1, eps > 0"));
    }
    let plan = IsotropicNormPlan::new(cfg.n, cfg.d, cfg.k)?;
    let per_trial: Vec<(bool, Vec<f64>)> = (0..cfg.trials)
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(coeffs, values), i| {
                let norms = plan.trial(cfg.seed, i, coeffs, values);
                let denom = norms[0].abs().max(VALUE_FLOOR);
                let ratios = norms[1..].iter().map(|g| g / denom).collect();
                (slow_growth_fails(&norms, cfg.k, cfg.eps), ratios)
            },
        )
        .collect();
    let failures = per_trial.iter().filter(|(f, _)| *f).count() as u64;
    let median_ratio = (0..cfg.k)
        .map(|t| median(&per_trial.iter().map(|(_, r)| r[t]).collect::<Vec<_>>()))
        .collect();
    Ok(DecayReport {
        d: cfg.d,
        n: cfg.n,
        k: cfg.k,
        t: None,
        eps: cfg.eps,
        trials: cfg.trials,
        empirical_prob: Proportion::new(failures, cfg.trials),
        median_ratio,
        median_contraction: Vec::new(),
        contraction_violations: 0,
        slope_fit: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalDecayConfig {
    pub k: usize,
    pub n: usize,
    pub d_sweep: Vec<usize>,
    pub eps: f64,
    pub trials: u64,
    pub seed: u64,
}

/// `‖p^{[t],v}(X)‖ <= (k/eps)^{4t} d^{-t/4} |p(X)|` for every `t = 1..=k`.
pub fn directional_decay_holds(value: f64, restricted_norms: &[f64], k: usize, d: usize, eps: f64) -> bool {
    let value = value.abs();
    if value < VALUE_FLOOR {
        return false;
    }
    let base = (k as f64 / eps).powi(4) * (d as f64).powf(-0.25);
    restricted_norms.iter().enumerate().all(|(i, r)| *r <= base.powi(i as i32 + 1) * value)
}

/// `‖∇^t p(X)‖` for `t = 1..=k` at one point, from the cheapest available route.
struct FullNorms {
    top: f64,
    gram: Option<PenultimateGram>,
    middle: Option<NormWorkspace>,
}

impl FullNorms {
    fn new(p: &Polynomial) -> Result<Self> {
        let k = p.degree_bound();
        let gram = if k >= 3 { Some(PenultimateGram::new(p)?) } else { None };
        let middle = if k >= 4 { Some(NormWorkspace::new(p.nvars(), k - 2, DEFAULT_TENSOR_CAP)?) } else { None };
        Ok(FullNorms { top: top_order_norm(p), gram, middle })
    }

    fn at(&self, p: &Polynomial, x: &SampleMatrix, grad_norm: f64, ws: Option<&mut NormWorkspace>) -> Result<Vec<f64>> {
        let k = p.degree_bound();
        let mut out = vec![0.0; k];
        out[0] = grad_norm;
        if let Some(ws) = ws {
            let mid = grad_norms(p, x, ws)?;
            out[1..k - 2].copy_from_slice(&mid[2..k - 1]);
        }
        if let Some(g) = &self.gram {
            out[k - 2] = g.norm(x.as_slice());
        }
        out[k - 1] = self.top;
        Ok(out)
    }
}

/// Per-d probability that the directional decay inequality holds at every order,
/// with one fixed isotropic polynomial per d and fresh `(X, v)` per trial.
pub fn empirical_lemma_3_1(cfg: &DirectionalDecayConfig) -> Result<Vec<DecayReport>> {
    if cfg.k == 0 || cfg.trials == 0 || !(cfg.eps > 0.0) || cfg.d_sweep.is_empty() {
        return Err(contract("directional decay check needs k >= 1, trials >= 1, eps > 0 and a d sweep"));
    }
    let mut rows = Vec::with_capacity(cfg.d_sweep.len());
    for &d in &cfg.d_sweep {
        rows.push(directional_row(cfg, d)?);
    }
    let ds: Vec<f64> = rows.iter().map(|r| r.d as f64).collect();
    let meds: Vec<Option<f64>> = rows.iter().map(|r| r.median_contraction[0]).collect();
    let slope = if ds.len() >= 2 && meds.iter().all(|m| m.is_some_and(|v| v > 0.0)) {
        Some(loglog_slope(&ds, &meds.iter().map(|m| m.unwrap()).collect::<Vec<_>>()))
    } else {
        None
    };
    rows.iter_mut().for_each(|r| r.slope_fit = slope);
    Ok(rows)
}

struct TrialOutcome {
    holds: bool,
    ratio: Vec<f64>,
    contraction: Vec<f64>,
    violated: bool,
}

/// Restriction coefficients and `‖∇p‖^2` for a block of trials.
enum JetSource<'a> {
    Sparse(JetKernel<'a>),
    Dense(CubicContraction),
}

impl JetSource<'_> {
    fn jets(&self, points: &[SampleMatrix], dirs: &[Vec<f64>]) -> Result<Vec<(Vec<f64>, f64)>> {
        match self {
            JetSource::Dense(c) => {
                Ok(c.restrict_batch(points, dirs)?.into_iter().map(|j| (j.coeffs, j.grad_norm_sq)).collect())
            }
            JetSource::Sparse(kernel) => {
                let mut block = LaneBlock::zeros(points[0].n() * points[0].d(), points[0].d());
                for (lane, (x, v)) in points.iter().zip(dirs).enumerate() {
                    block.set_point(lane, x.as_slice());
                    block.set_direction(lane, v);
                }
                let mut out = kernel.output();
                kernel.run(&block, true, &mut out);
                Ok((0..points.len()).map(|lane| (out.lane_coeffs(lane), out.lane_grad_norm_sq(lane))).collect())
            }
        }
    }
}

fn directional_row(cfg: &DirectionalDecayConfig, d: usize) -> Result<DecayReport> {
    let (n, k) = (cfg.n, cfg.k);
    let seed = derive_seed(cfg.seed, d as u64);
    let p = Polynomial::random_isotropic(n, d, k, &mut stream(seed, TAG_POLY, 0))?;
    let source = match (k, CubicContraction::new(&p)) {
        (3, Ok(dense)) => JetSource::Dense(dense),
        _ => JetSource::Sparse(JetKernel::new(&p)?),
    };
    let full = FullNorms::new(&p)?;
    let blocks = cfg.trials.div_ceil(LANES as u64);
    let outcomes: Vec<TrialOutcome> = (0..blocks)
        .into_par_iter()
        .map(|b| -> Result<Vec<TrialOutcome>> {
            let first = b * LANES as u64;
            let lanes = (cfg.trials - first).min(LANES as u64);
            let points: Vec<SampleMatrix> =
                (first..first + lanes).map(|i| SampleMatrix::gaussian(n, d, &mut stream(seed, TAG_POINTS, i))).collect();
            let dirs: Vec<Vec<f64>> =
                (first..first + lanes).map(|i| sample_unit_sphere(d, &mut stream(seed, TAG_DIRECTION, i))).collect();
            let jets = source.jets(&points, &dirs)?;
            let mut ws = full.middle.clone();
            points
                .iter()
                .zip(jets)
                .map(|(x, (coeffs, grad_sq))| {
                    let q = DirectionalRestriction::from_coeffs(n, k, coeffs)?;
                    let restricted: Vec<f64> = (1..=k).map(|t| q.norm(t)).collect();
                    let norms = full.at(&p, x, grad_sq.sqrt(), ws.as_mut())?;
                    let denom = q.value().abs().max(VALUE_FLOOR);
                    Ok(TrialOutcome {
                        holds: directional_decay_holds(q.value(), &restricted, k, d, cfg.eps),
                        ratio: restricted.iter().map(|r| r / denom).collect(),
                        contraction: restricted.iter().zip(&norms).map(|(r, g)| r / g).collect(),
                        violated: restricted.iter().zip(&norms).any(|(r, g)| *r > g * (1.0 + 1e-9) + 1e-12),
                    })
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let median_ratio = (0..k).map(|t| median(&outcomes.iter().map(|o| o.ratio[t]).collect::<Vec<_>>())).collect();
    let median_contraction =
        (0..k).map(|t| median(&outcomes.iter().map(|o| o.contraction[t]).collect::<Vec<_>>())).collect();
    Ok(DecayReport {
        d,
        n,
        k,
        t: None,
        eps: cfg.eps,
        trials: cfg.trials,
        empirical_prob: Proportion::new(outcomes.iter().filter(|o| o.holds).count() as u64, cfg.trials),
        median_ratio,
        median_contraction,
        contraction_violations: outcomes.iter().filter(|o| o.violated).count() as u64,
        slope_fit: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::LabRng;
    use crate::stats::{gaussian_moment, mean_var, normal_cdf};
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn isserlis_examples() {
        let cov = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, -0.1, 0.3, 1.0, 0.4, -0.1, 0.4, 1.5]);
        assert_eq!(isserlis(&cov, &[0, 1, 2]).unwrap(), 0.0);
        assert_eq!(isserlis(&cov, &[0, 1]).unwrap(), 0.3);
        assert_eq!(isserlis(&DMatrix::identity(2, 2), &[1, 1, 1, 1]).unwrap(), 3.0);
        assert_eq!(isserlis(&cov, &[]).unwrap(), 1.0);
    }

    #[test]
    fn isserlis_rejects_bad_input() {
        let skew = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.1, 1.0]);
        assert!(matches!(isserlis(&skew, &[0, 1]), Err(LabError::Contract(_))));
        let id = DMatrix::<f64>::identity(2, 2);
        assert!(matches!(isserlis(&id, &[0; 14]), Err(LabError::Capability(_))));
        assert!(matches!(isserlis(&id, &[0, 2]), Err(LabError::Contract(_))));
    }

    #[test]
    fn isserlis_diagonal_matches_moments() {
        // Independent coordinates: the product of one-dimensional moments.
        let cov = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 4.0, 0.25]));
        let got = isserlis(&cov, &[0, 0, 0, 0, 1, 1, 2, 2, 2, 2, 2, 2]).unwrap();
        let want = gaussian_moment(4) * 4.0 * gaussian_moment(6) * 0.25f64.powi(3);
        assert!((got - want).abs() < 1e-12 * want);
    }

    #[test]
    fn isserlis_matches_monte_carlo() {
        let cov = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.2, 0.5, 2.0, -0.3, 0.2, -0.3, 1.0]);
        let l = cov.clone().cholesky().unwrap().l();
        let mut rng = LabRng::seed_from_u64(17);
        let cases: [&[usize]; 5] = [&[0, 1], &[0, 0, 1, 1], &[0, 1, 2, 2], &[0, 0, 0, 1, 2, 2], &[1, 1, 1, 1, 2, 2]];
        let draws = 1_000_000;
        let mut samples = vec![Vec::with_capacity(draws); cases.len()];
        for _ in 0..draws {
            let z = nalgebra::DVector::from_fn(3, |_, _| StandardNormal.sample(&mut rng));
            let x = &l * z;
            for (c, idx) in cases.iter().enumerate() {
                samples[c].push(idx.iter().map(|&i| x[i]).product::<f64>());
            }
        }
        for (c, idx) in cases.iter().enumerate() {
            let (mean, var) = mean_var(&samples[c]);
            let se = (var / draws as f64).sqrt();
            let exact = isserlis(&cov, idx).unwrap();
            assert!((mean - exact).abs() <= 3.0 * se, "{idx:?}: {mean} vs {exact} (se {se})");
        }
    }

    /// `‖E[g^{⊗2t}]‖_F` by enumerating every index tuple.
    fn brute_gaussian_norm(d: usize, t: usize) -> f64 {
        let mut acc = 0.0;
        let total = d.pow(2 * t as u32);
        for mut code in 0..total {
            let mut counts = vec![0u32; d];
            for _ in 0..2 * t {
                counts[code % d] += 1;
                code /= d;
            }
            let e: f64 = counts.iter().map(|&c| gaussian_moment(c)).product();
            acc += e * e;
        }
        acc.sqrt()
    }

    #[test]
    fn sphere_w_first_order_is_exact() {
        for d in [1usize, 4, 16, 64, 256] {
            assert_eq!(sphere_w_matrix_norm(d, 1).unwrap(), 1.0 / (d as f64).sqrt(), "d={d}");
        }
        for d in [2, 3, 7, 255] {
            let want = (d as f64).powf(-0.5);
            assert!((sphere_w_matrix_norm(d, 1).unwrap() - want).abs() <= 2.0 * f64::EPSILON * want, "d={d}");
        }
    }

    #[test]
    fn pattern_sum_matches_enumeration() {
        for (d, t) in [(1, 3), (2, 1), (2, 2), (2, 3), (3, 2), (3, 3), (4, 2), (2, 4)] {
            let got = gaussian_moment_matrix_norm(d, t).unwrap();
            let want = brute_gaussian_norm(d, t);
            assert!((got - want).abs() < 1e-12 * want, "d={d} t={t}: {got} vs {want}");
            let w = sphere_w_matrix_norm(d, t).unwrap();
            assert!((w * radial_moment(d, t) - want).abs() < 1e-12 * want);
        }
    }

    #[test]
    fn sphere_w_matches_monte_carlo() {
        // ‖W‖^2 = E[(v . v')^{2t}] for independent uniform v, v'.
        let (d, t) = (4, 2);
        let mut rng = LabRng::seed_from_u64(99);
        let pairs = 500_000;
        let vals: Vec<f64> = (0..pairs)
            .map(|_| {
                let a = sample_unit_sphere(d, &mut rng);
                let b = sample_unit_sphere(d, &mut rng);
                a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>().powi(2 * t as i32)
            })
            .collect();
        let (mean, var) = mean_var(&vals);
        let se = (var / pairs as f64).sqrt();
        let w = sphere_w_matrix_norm(d, t).unwrap();
        assert!((w * w - mean).abs() <= 3.0 * se, "{} vs {mean} (se {se})", w * w);
    }

    #[test]
    fn double_factorial_bound_and_closed_form() {
        for d in [2, 4, 8, 16, 64] {
            for t in 1..=3 {
                let pt = sphere_w_point(d, t).unwrap();
                assert!(pt.double_factorial_holds, "{pt:?}");
            }
            assert!(!sphere_w_point(d, 1).unwrap().closed_form_holds);
        }
        assert!(matches!(sphere_w_matrix_norm(8, 5), Err(LabError::Capability(_))));
    }

    fn slow_growth(k: usize, eps: f64, trials: u64, seed: u64) -> DecayReport {
        empirical_fact_3_2(&SlowGrowthConfig { k, n: 2, d: 8, eps, trials, seed }).unwrap()
    }

    #[test]
    fn linear_failure_fraction_matches_gaussian_window() {
        let (eps, trials, seed) = (0.3, 20_000, 5);
        let rep = slow_growth(1, eps, trials, seed);
        // Given c, c.X ~ N(0, |c|^2): failure iff |c0 + c.X| < eps |c|.
        let probs: Vec<f64> = (0..trials)
            .map(|i| {
                let p = Polynomial::random_isotropic(2, 8, 1, &mut stream(seed, TAG_POLY, i)).unwrap();
                let c0 = p.coefficient_of(&[]);
                let s = (0..16u32).map(|v| p.coefficient_of(&[v]).powi(2)).sum::<f64>().sqrt();
                normal_cdf(eps - c0 / s) - normal_cdf(-eps - c0 / s)
            })
            .collect();
        let expected = probs.iter().sum::<f64>() / trials as f64;
        let se = (probs.iter().map(|q| q * (1.0 - q)).sum::<f64>()).sqrt() / trials as f64;
        let got = rep.empirical_prob.estimate;
        assert!((got - expected).abs() <= 3.0 * se, "{got} vs {expected} (se {se})");
    }

    #[test]
    fn failure_fraction_is_monotone_in_eps() {
        let lo = slow_growth(3, 0.05, 1500, 1);
        let hi = slow_growth(3, 0.2, 1500, 2);
        let pooled = (lo.empirical_prob.stderr.powi(2) + hi.empirical_prob.stderr.powi(2)).sqrt();
        assert!(lo.empirical_prob.estimate <= hi.empirical_prob.estimate + 2.0 * pooled);
        assert!(hi.empirical_prob.estimate <= 0.6);
        assert_eq!(lo.median_ratio.len(), 3);
    }

    #[test]
    fn chained_decay_on_slow_growth_event() {
        let (k, n, d) = (3, 2, 4);
        let eps = (k as f64).powf(-2.1);
        let mut ws = NormWorkspace::new(n * d, k, DEFAULT_TENSOR_CAP).unwrap();
        let mut events = 0;
        for i in 0..2000 {
            let p = Polynomial::random_isotropic(n, d, k, &mut stream(3, TAG_POLY, i)).unwrap();
            let x = SampleMatrix::gaussian(n, d, &mut stream(3, TAG_POINTS, i));
            let norms = grad_norms(&p, &x, &mut ws).unwrap();
            if slow_growth_fails(&norms, k, eps) {
                continue;
            }
            events += 1;
            for t in 1..=k {
                let constant = (k as f64).powi(3 * t as i32);
                assert!(norms[0].abs() >= eps.powi(t as i32) * norms[t] / constant);
            }
        }
        assert!(events > 0);
    }

    #[test]
    fn directional_sweep_is_contracting_and_deterministic() {
        let cfg = DirectionalDecayConfig { k: 3, n: 2, d_sweep: vec![4, 16], eps: 0.05, trials: 96, seed: 8 };
        let rows = empirical_lemma_3_1(&cfg).unwrap();
        assert_eq!(rows, empirical_lemma_3_1(&cfg).unwrap());
        for r in &rows {
            assert_eq!(r.contraction_violations, 0);
            assert!(r.empirical_prob.estimate >= 0.9);
            assert!(r.median_contraction.iter().all(|m| m.unwrap() <= 1.0));
        }
        assert!(rows[0].slope_fit.unwrap() < 0.0);
    }

    #[test]
    fn norm_plan_matches_grad_norms() {
        let (n, d, k) = (2, 3, 3);
        let plan = IsotropicNormPlan::new(n, d, k).unwrap();
        let mut ws = NormWorkspace::new(n * d, k, DEFAULT_TENSOR_CAP).unwrap();
        let (mut c, mut v) = (Vec::new(), Vec::new());
        for i in 0..10 {
            let got = plan.trial(21, i, &mut c, &mut v);
            let p = Polynomial::random_isotropic(n, d, k, &mut stream(21, TAG_POLY, i)).unwrap();
            let x = SampleMatrix::gaussian(n, d, &mut stream(21, TAG_POINTS, i));
            let want = grad_norms(&p, &x, &mut ws).unwrap();
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn directional_norms_match_direct_tensors() {
        // Cross-check the batched route against grad_norms and explicit restriction on one block.
        let (n, d, k) = (2, 3, 4);
        let p = Polynomial::random_isotropic(n, d, k, &mut stream(4, TAG_POLY, 0)).unwrap();
        let full = FullNorms::new(&p).unwrap();
        let mut ws_mid = full.middle.clone();
        let mut ws = NormWorkspace::new(n * d, k, DEFAULT_TENSOR_CAP).unwrap();
        for i in 0..5 {
            let x = SampleMatrix::gaussian(n, d, &mut stream(4, TAG_POINTS, i));
            let direct = grad_norms(&p, &x, &mut ws).unwrap();
            let got = full.at(&p, &x, direct[1], ws_mid.as_mut()).unwrap();
            for t in 1..=k {
                assert!((got[t - 1] - direct[t]).abs() < 1e-9 * direct[t].max(1.0), "t={t}");
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn radial_factorization(d in 1usize..=64, t in 1usize..=3) {
                let product: f64 = (0..t).map(|i| (d + 2 * i) as f64).product();
                let lhs = sphere_w_matrix_norm(d, t).unwrap() * product;
                let rhs = gaussian_moment_matrix_norm(d, t).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs, "{lhs} vs {rhs}");
            }

            #[test]
            fn first_order_norm_is_inverse_root_d(d in 1usize..=512) {
                let want = (d as f64).powf(-0.5);
                prop_assert!((sphere_w_matrix_norm(d, 1).unwrap() - want).abs() <= 4.0 * f64::EPSILON * want);
            }
        }
    }
}
