//! The norm-excess distinguisher `sum_i (‖x_i‖^2 - d)^{2t}` against a
//! moment-matched component with a far atom.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{build_with_eps, sample_unit_sphere, Component, HiddenDirectionModel, MomentMatchedA};
use crate::error::{contract, Result};
use crate::rng::{stream, LabRng, TAG_ALT, TAG_CALIBRATION, TAG_DIRECTION, TAG_NULL};
use crate::stats::{upper_quantile, Proportion};
use crate::tensor_poly::SampleMatrix;

/// Default multiple in `R = mult * log^{1/4}(max(n, 3)) * d^{1/4}`.
pub const DEFAULT_R_MULTIPLIER: f64 = 4.0;
/// Null quantile used as the flagging threshold.
pub const CALIBRATION_QUANTILE: f64 = 0.90;

/// `sum_i (‖x_i‖^2 - d)^{2t}`.
pub fn c1_statistic(x: &SampleMatrix, t: usize) -> Result<f64> {
    if t == 0 {
        return Err(contract("exponent order t must be >= 1"));
    }
    let d = x.d() as f64;
    let norms: Vec<f64> = (0..x.n()).map(|i| x.row(i).iter().map(|v| v * v).sum()).collect();
    Ok(c1_statistic_from_norms(&norms, d, t))
}

/// The statistic from squared norms alone.
pub fn c1_statistic_from_norms(norms_sq: &[f64], d: f64, t: usize) -> f64 {
    norms_sq.iter().map(|s| (s - d).powi(2 * t as i32)).sum()
}

/// `t = max(1, floor(ln n))`.
pub fn c1_default_t(n: usize) -> usize {
    ((n as f64).ln().floor() as usize).max(1)
}

pub fn c1_atom_location(d: usize, n: usize, multiplier: f64) -> f64 {
    multiplier * (n.max(3) as f64).ln().powf(0.25) * (d as f64).powf(0.25)
}

/// How batches are drawn. The statistic depends on the samples only through
/// their norms, so `NormOnly` draws `‖x‖^2` directly: chi-square(d) under the
/// null and `xi^2 + chi-square(d-1)` under the alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum C1Sampling {
    NormOnly,
    /// Full `n x d` batches, with a fresh uniform direction per alternative batch.
    FullVectors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C1Config {
    pub d: usize,
    pub m: usize,
    pub n: usize,
    /// `None` uses [`c1_default_t`].
    pub t: Option<usize>,
    pub trials: u64,
    pub r_multiplier: f64,
    /// Replaces the automatic atom mass; `Some(0.0)` makes the alternative Gaussian.
    pub eps_override: Option<f64>,
    pub sampling: C1Sampling,
    pub seed: u64,
}

impl C1Config {
    pub fn new(d: usize, m: usize, n: usize, trials: u64, seed: u64) -> Self {
        C1Config {
            d,
            m,
            n,
            t: None,
            trials,
            r_multiplier: DEFAULT_R_MULTIPLIER,
            eps_override: None,
            sampling: C1Sampling::NormOnly,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C1Report {
    pub config: C1Config,
    pub t: usize,
    pub r: f64,
    pub a_eps: f64,
    /// Empirical 0.90 quantile of the statistic over an independent null calibration run.
    pub threshold: f64,
    pub null_flags: Proportion,
    pub alt_flags: Proportion,
}

struct Batches<'a> {
    cfg: &'a C1Config,
    a: &'a MomentMatchedA,
    t: usize,
    chi_d: ChiSquared<f64>,
    chi_rest: Option<ChiSquared<f64>>,
}

impl Batches<'_> {
    fn null_statistic(&self, rng: &mut LabRng) -> f64 {
        let (n, d) = (self.cfg.n, self.cfg.d);
        let norms: Vec<f64> = match self.cfg.sampling {
            C1Sampling::NormOnly => (0..n).map(|_| self.chi_d.sample(rng)).collect(),
            C1Sampling::FullVectors => {
                (0..n).map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal).powi(2)).sum()).collect()
            }
        };
        c1_statistic_from_norms(&norms, d as f64, self.t)
    }

    fn alt_statistic(&self, tag_index: u64) -> Result<f64> {
        let (n, d) = (self.cfg.n, self.cfg.d);
        let mut rng = stream(self.cfg.seed, TAG_ALT, tag_index);
        let comp = Component::MomentMatched(self.a.clone());
        let norms: Vec<f64> = match self.cfg.sampling {
            C1Sampling::NormOnly => (0..n)
                .map(|_| {
                    let xi = comp.sample(&mut rng)?;
                    let rest = self.chi_rest.as_ref().map_or(0.0, |c| c.sample(&mut rng));
                    Ok(xi * xi + rest)
                })
                .collect::<Result<_>>()?,
            C1Sampling::FullVectors => {
                let v = sample_unit_sphere(d, &mut stream(self.cfg.seed, TAG_DIRECTION, tag_index));
                let model = HiddenDirectionModel::new(comp, v)?;
                let mut row = vec![0.0; d];
                (0..n)
                    .map(|_| {
                        model.sample_into(&mut rng, &mut row)?;
                        Ok(row.iter().map(|x| x * x).sum())
                    })
                    .collect::<Result<_>>()?
            }
        };
        Ok(c1_statistic_from_norms(&norms, d as f64, self.t))
    }
}

/// Calibrate the threshold on null data, then report how often null and
/// alternative batches exceed it.
pub fn c1_experiment(cfg: &C1Config) -> Result<C1Report> {
    if cfg.d == 0 || cfg.n == 0 || cfg.trials == 0 {
        return Err(contract("c1 experiment needs d, n, trials >= 1"));
    }
    let t = cfg.t.unwrap_or_else(|| c1_default_t(cfg.n));
    if t == 0 {
        return Err(contract("exponent order t must be >= 1"));
    }
    let r = c1_atom_location(cfg.d, cfg.n, cfg.r_multiplier);
    let a = build_with_eps(cfg.m, r, cfg.eps_override)?;
    let chi = |k: usize| ChiSquared::new(k as f64).map_err(|e| contract(e.to_string()));
    let batches = Batches {
        cfg,
        a: &a,
        t,
        chi_d: chi(cfg.d)?,
        chi_rest: if cfg.d > 1 { Some(chi(cfg.d - 1)?) } else { None },
    };
    let null_run = |tag: u64| -> Vec<f64> {
        (0..cfg.trials).into_par_iter().map(|i| batches.null_statistic(&mut stream(cfg.seed, tag, i))).collect()
    };
    let calibration = null_run(TAG_CALIBRATION);
    let threshold = upper_quantile(&calibration, CALIBRATION_QUANTILE);
    let null_hits = null_run(TAG_NULL).iter().filter(|s| **s > threshold).count() as u64;
    let alt: Vec<f64> = (0..cfg.trials).into_par_iter().map(|i| batches.alt_statistic(i)).collect::<Result<_>>()?;
    let alt_hits = alt.iter().filter(|s| **s > threshold).count() as u64;
    Ok(C1Report {
        config: cfg.clone(),
        t,
        r,
        a_eps: a.eps,
        threshold,
        null_flags: Proportion::new(null_hits, cfg.trials),
        alt_flags: Proportion::new(alt_hits, cfg.trials),
    })
}
