//! Monte Carlo harnesses for the mollified threshold function.
//!
//! Polynomials come from a fixed pool (one isotropic draw per pool slot);
//! blocks of [`LANES`] trials share a polynomial so the batched kernel can
//! restrict all of them in one pass over the terms.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    check_fd_args, fd_combine, fd_reach, line_grid_point, sign_changes, LineScratch, Mollifier, MollifierConfig,
    WELL_BEHAVED_GRID,
};
use crate::distributions::sample_unit_sphere;
use crate::error::{contract, Result};
use crate::rng::{stream, TAG_DIRECTION, TAG_POINTS, TAG_POLY};
use crate::stats::{loglog_slope, median, Proportion};
use crate::tensor_poly::{DirectionalRestriction, JetKernel, LaneBlock, Polynomial, SampleMatrix, LANES};

/// One block of restricted trials: `(X, v, restriction)` per used lane.
fn restricted_block(
    poly: &Polynomial,
    kernel: &JetKernel<'_>,
    seed: u64,
    first_trial: u64,
    lanes: usize,
) -> Result<Vec<(SampleMatrix, Vec<f64>, DirectionalRestriction)>> {
    let (n, d, k) = (poly.n(), poly.d(), poly.degree_bound());
    let mut block = LaneBlock::zeros(poly.nvars(), d);
    let mut inputs = Vec::with_capacity(lanes);
    for lane in 0..lanes {
        let trial = first_trial + lane as u64;
        let x = SampleMatrix::gaussian(n, d, &mut stream(seed, TAG_POINTS, trial));
        let v = sample_unit_sphere(d, &mut stream(seed, TAG_DIRECTION, trial));
        block.set_point(lane, x.as_slice());
        block.set_direction(lane, &v);
        inputs.push((x, v));
    }
    let mut out = kernel.output();
    kernel.run(&block, false, &mut out);
    inputs
        .into_iter()
        .enumerate()
        .map(|(lane, (x, v))| {
            let q = DirectionalRestriction::from_coeffs(n, k, out.lane_coeffs(lane))?;
            Ok((x, v, q))
        })
        .collect()
}

fn polynomial_pool(n: usize, d: usize, k: usize, pool: usize, seed: u64) -> Result<Vec<Polynomial>> {
    (0..pool as u64).map(|j| Polynomial::random_isotropic(n, d, k, &mut stream(seed, TAG_POLY, j))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisagreementConfig {
    pub d: usize,
    pub n: usize,
    pub k: usize,
    pub c_g: f64,
    pub trials: u64,
    /// Number of independent polynomials; trials cycle through them in blocks.
    pub pool: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisagreementReport {
    pub config: DisagreementConfig,
    /// Trials with `h(X) != sign(p(X))`.
    pub disagreement: Proportion,
    /// Trials with `h(X) > sign(p(X))` or `h(X) < 0`; must be zero.
    pub sandwich_violations: u64,
    /// Trials meeting `‖p^{[t],v}‖^2 <= d^{-c_g t} p^2` for every t.
    pub strict_decay_events: u64,
    /// Strict-decay trials where `h != sign(p)`; must be zero.
    pub strict_decay_violations: u64,
}

/// Rate at which `h` and `sign(p)` disagree on Gaussian inputs with a uniform direction.
pub fn disagreement_rate(cfg: &DisagreementConfig) -> Result<DisagreementReport> {
    if cfg.trials == 0 || cfg.pool == 0 {
        return Err(contract("disagreement run needs trials >= 1 and pool >= 1"));
    }
    let moll = Mollifier::new(MollifierConfig::new(cfg.c_g, cfg.k)?)?;
    let pool = polynomial_pool(cfg.n, cfg.d, cfg.k, cfg.pool, cfg.seed)?;
    let kernels = pool.iter().map(JetKernel::new).collect::<Result<Vec<_>>>()?;
    let blocks = cfg.trials.div_ceil(LANES as u64);
    let df = cfg.d as f64;
    let tallies: Vec<[u64; 4]> = (0..blocks)
        .into_par_iter()
        .map(|b| -> Result<[u64; 4]> {
            let j = (b % cfg.pool as u64) as usize;
            let first = b * LANES as u64;
            let lanes = (cfg.trials - first).min(LANES as u64) as usize;
            let mut tally = [0u64; 4];
            for (_, _, q) in restricted_block(&pool[j], &kernels[j], cfg.seed, first, lanes)? {
                let norms: Vec<f64> = (1..=cfg.k).map(|t| q.norm_sq(t)).collect();
                let value = q.value();
                let h = moll.h_from_norms(value, &norms, cfg.d);
                let sign = if value >= 0.0 { 1.0 } else { 0.0 };
                tally[0] += (h != sign) as u64;
                tally[1] += (h > sign || h < 0.0) as u64;
                let strict = norms
                    .iter()
                    .enumerate()
                    .all(|(idx, n2)| *n2 <= df.powf(-cfg.c_g * (idx + 1) as f64) * value * value);
                tally[2] += strict as u64;
                tally[3] += (strict && h != sign) as u64;
            }
            Ok(tally)
        })
        .collect::<Result<Vec<_>>>()?;
    let total = tallies.iter().fold([0u64; 4], |mut acc, t| {
        for i in 0..4 {
            acc[i] += t[i];
        }
        acc
    });
    Ok(DisagreementReport {
        config: cfg.clone(),
        disagreement: Proportion::new(total[0], cfg.trials),
        sandwich_violations: total[1],
        strict_decay_events: total[2],
        strict_decay_violations: total[3],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MollifierSuiteReport {
    /// `rho(x) == 1` at every 1e-3 grid point of `[-0.999, 0.999]`.
    pub plateau_exact: bool,
    /// `rho(x) == 0` at sampled `|x| >= 3`.
    pub zero_exact: bool,
    pub gaussian: DisagreementReport,
}

/// Plateau/zero exactness of `rho` plus a Gaussian disagreement run.
pub fn mollifier_suite(cfg: &DisagreementConfig) -> Result<MollifierSuiteReport> {
    let moll = Mollifier::new(MollifierConfig::new(cfg.c_g, cfg.k)?)?;
    let plateau_exact = (0..=1998).all(|j| moll.rho(-0.999 + j as f64 * 1e-3) == 1.0);
    let zero_exact = (0..=1000).all(|j| {
        let x = 3.0 + j as f64 * 1e-2;
        moll.rho(x) == 0.0 && moll.rho(-x) == 0.0
    });
    Ok(MollifierSuiteReport { plateau_exact, zero_exact, gaussian: disagreement_rate(cfg)? })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayProbeConfig {
    pub d_sweep: Vec<usize>,
    pub n: usize,
    pub k: usize,
    pub c_g: f64,
    /// Interval half-width is `d^c_trunc`.
    pub c_trunc: f64,
    /// Finite-difference step.
    pub step: f64,
    /// Derivative orders probed.
    pub orders: Vec<usize>,
    pub trials: u64,
    pub pool: usize,
    pub slot: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayProbeRow {
    pub d: usize,
    pub trials: u64,
    pub well_behaved: u64,
    /// Per order: well-behaved trials whose statistic is positive.
    pub nonzero: Vec<u64>,
    /// Per order: median of the positive statistics.
    pub median: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayProbe {
    pub config: DecayProbeConfig,
    pub rows: Vec<DecayProbeRow>,
    /// Per order: log-log slope of the medians against d.
    pub slopes: Vec<Option<f64>>,
    /// Per order: the ceiling `-c_g t / 2 + 0.1`.
    pub slope_ceilings: Vec<f64>,
}

/// Sup over the line grid of the unflagged `|D^t_{slot,v} h|`, for each order.
#[allow(clippy::too_many_arguments)]
fn line_sup(
    moll: &Mollifier,
    q: &DirectionalRestriction,
    d: usize,
    slot: usize,
    along: f64,
    big_t: f64,
    orders: &[usize],
    step: f64,
    scratch: &mut LineScratch,
) -> Result<Vec<f64>> {
    for &t in orders {
        check_fd_args(t, step)?;
    }
    let reach = orders.iter().map(|&t| fd_reach(t)).max().unwrap_or(1);
    let line = q.line_polynomial(slot);
    let mut sup = vec![0.0f64; orders.len()];
    let mut hv = [0.0; 5];
    for j in 0..WELL_BEHAVED_GRID {
        let xi = line_grid_point(j, big_t) - along;
        for (o, h) in hv.iter_mut().enumerate() {
            let k = o as i32 - 2;
            if k.unsigned_abs() as usize <= reach {
                *h = moll.h_on_line(q, d, slot, xi + k as f64 * step, scratch);
            }
        }
        for (o, &t) in orders.iter().enumerate() {
            let r = fd_reach(t) as f64 * step;
            if !sign_changes(&line, xi - r, xi + r) {
                sup[o] = sup[o].max(fd_combine(t, &hv, step).abs());
            }
        }
    }
    Ok(sup)
}

/// Finite-difference sizes of `D^t h` on well-behaved lines across a d sweep.
pub fn derivative_decay_probe(cfg: &DecayProbeConfig) -> Result<DecayProbe> {
    if cfg.trials == 0 || cfg.pool == 0 || cfg.d_sweep.is_empty() || cfg.orders.is_empty() {
        return Err(contract("decay probe needs trials, pool, d values and orders"));
    }
    if cfg.slot >= cfg.n {
        return Err(contract(format!("slot {} out of range for n = {}", cfg.slot, cfg.n)));
    }
    let moll = Mollifier::new(MollifierConfig::new(cfg.c_g, cfg.k)?)?;
    let mut rows = Vec::with_capacity(cfg.d_sweep.len());
    for (di, &d) in cfg.d_sweep.iter().enumerate() {
        let seed = crate::rng::derive_seed(cfg.seed, di as u64);
        let pool = polynomial_pool(cfg.n, d, cfg.k, cfg.pool, seed)?;
        let kernels = pool.iter().map(JetKernel::new).collect::<Result<Vec<_>>>()?;
        let big_t = (d as f64).powf(cfg.c_trunc);
        let blocks = cfg.trials.div_ceil(LANES as u64);
        let per_block: Vec<Vec<Option<Vec<f64>>>> = (0..blocks)
            .into_par_iter()
            .map(|b| -> Result<Vec<Option<Vec<f64>>>> {
                let j = (b % cfg.pool as u64) as usize;
                let first = b * LANES as u64;
                let lanes = (cfg.trials - first).min(LANES as u64) as usize;
                let mut scratch = LineScratch::default();
                restricted_block(&pool[j], &kernels[j], seed, first, lanes)?
                    .into_iter()
                    .map(|(x, v, q)| {
                        if moll.well_behaved_restricted(&q, d, &x, &v, cfg.slot, big_t).is_none() {
                            return Ok(None);
                        }
                        let along = crate::tensor_poly::dot(x.row(cfg.slot), &v);
                        line_sup(&moll, &q, d, cfg.slot, along, big_t, &cfg.orders, cfg.step, &mut scratch).map(Some)
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()?;
        let stats: Vec<Vec<f64>> = per_block.into_iter().flatten().flatten().collect();
        let mut nonzero = Vec::new();
        let mut medians = Vec::new();
        for o in 0..cfg.orders.len() {
            let positive: Vec<f64> = stats.iter().map(|s| s[o]).filter(|v| *v > 0.0).collect();
            nonzero.push(positive.len() as u64);
            medians.push(median(&positive));
        }
        rows.push(DecayProbeRow { d, trials: cfg.trials, well_behaved: stats.len() as u64, nonzero, median: medians });
    }
    let slopes = (0..cfg.orders.len())
        .map(|o| {
            let pts: Vec<(f64, f64)> =
                rows.iter().filter_map(|r| r.median[o].map(|m| (r.d as f64, m))).collect();
            if pts.len() < 2 {
                return None;
            }
            let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            Some(loglog_slope(&xs, &ys))
        })
        .collect();
    let slope_ceilings = cfg.orders.iter().map(|&t| -cfg.c_g * t as f64 / 2.0 + 0.1).collect();
    Ok(DecayProbe { config: cfg.clone(), rows, slopes, slope_ceilings })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disagreement_is_deterministic_and_sandwiched() {
        let cfg = DisagreementConfig { d: 8, n: 2, k: 2, c_g: 0.2, trials: 100, pool: 3, seed: 9 };
        let a = disagreement_rate(&cfg).unwrap();
        let b = disagreement_rate(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sandwich_violations, 0);
        assert_eq!(a.strict_decay_violations, 0);
        assert_eq!(a.disagreement.trials, 100);
    }

    #[test]
    fn kernel_block_matches_direct_restriction() {
        let p = Polynomial::random_isotropic(2, 3, 3, &mut stream(4, TAG_POLY, 0)).unwrap();
        let kernel = JetKernel::new(&p).unwrap();
        for (x, v, q) in restricted_block(&p, &kernel, 4, 0, 5).unwrap() {
            let direct = DirectionalRestriction::new(&p, &x, &v).unwrap();
            for (a, b) in q.coeffs().iter().zip(direct.coeffs()) {
                assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn small_decay_probe_runs() {
        let cfg = DecayProbeConfig {
            d_sweep: vec![4, 8],
            n: 2,
            k: 2,
            c_g: 0.2,
            c_trunc: 0.05,
            step: 1e-3,
            orders: vec![1, 2],
            trials: 40,
            pool: 2,
            slot: 0,
            seed: 1,
        };
        let probe = derivative_decay_probe(&cfg).unwrap();
        assert_eq!(probe.rows.len(), 2);
        assert!(probe.rows.iter().all(|r| r.well_behaved <= r.trials));
        assert_eq!(probe.slope_ceilings, vec![0.0, -0.1]);
    }
}
