//! Acceptance gap `|E[sign p(Y)] - E[sign p(X)]|` of polynomial threshold
//! functions between `M_{A,v}^{n}` and `N(0, I)^{n}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{sample_unit_sphere, Component, HiddenDirectionModel};
use crate::error::{contract, Result};
use crate::rng::{stream, TAG_ALT, TAG_DIRECTION, TAG_HELDOUT, TAG_NULL, TAG_POLY};
use crate::stats::Proportion;
use crate::tensor_poly::{check_unit, norm, BatchEvaluator, Polynomial, QuadraticForm, SampleMatrix};

/// Batches generated and evaluated together.
const CHUNK: u64 = 256;
/// Held-out draws used to estimate the direction in the mean-shift control.
pub const HELDOUT_SAMPLES: usize = 256;

/// The polynomials whose threshold functions are tested.
#[derive(Debug, Clone)]
pub enum Ensemble {
    Explicit(Vec<Polynomial>),
    /// `count` isotropic random polynomials of degree `k`, drawn from `TAG_POLY` streams.
    RandomIsotropic { count: usize, k: usize },
}

/// How the hidden direction is chosen per alternative batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Direction {
    /// Uniform on the sphere, fresh for every batch.
    Fresh,
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoolingConfig {
    pub d: usize,
    pub n: usize,
    /// Batches per hypothesis.
    pub trials: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyGap {
    pub index: usize,
    /// Fraction of batches with `p > 0`.
    pub null_accept: Proportion,
    pub alt_accept: Proportion,
    /// `|E_alt sign p - E_null sign p| = 2 |alt - null|`.
    pub gap: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoolingReport {
    pub config: FoolingConfig,
    pub ensemble: String,
    pub direction: String,
    pub per_polynomial: Vec<PolyGap>,
    pub argmax: usize,
    pub max_gap: f64,
    pub max_stderr: f64,
}

impl FoolingReport {
    /// `max_gap <= bound + 3 stderr`.
    pub fn within(&self, bound: f64) -> bool {
        self.max_gap <= bound + 3.0 * self.max_stderr
    }
}

fn evaluator(p: &Polynomial) -> Result<Box<dyn BatchEvaluator>> {
    if p.degree_bound() <= 2 {
        Ok(Box::new(QuadraticForm::from_polynomial(p)?))
    } else {
        Ok(Box::new(p.clone()))
    }
}

fn build_evaluators(ensemble: &Ensemble, cfg: &FoolingConfig) -> Result<(Vec<Box<dyn BatchEvaluator>>, String)> {
    match ensemble {
        Ensemble::Explicit(list) => {
            if list.is_empty() {
                return Err(contract("explicit ensemble is empty"));
            }
            for p in list {
                if p.n() != cfg.n || p.d() != cfg.d {
                    return Err(contract(format!("polynomial shape ({}, {}) != ({}, {})", p.n(), p.d(), cfg.n, cfg.d)));
                }
            }
            let evals = list.iter().map(evaluator).collect::<Result<Vec<_>>>()?;
            Ok((evals, format!("explicit({})", list.len())))
        }
        Ensemble::RandomIsotropic { count, k } => {
            if *count == 0 || *k == 0 {
                return Err(contract("random ensemble needs count >= 1 and k >= 1"));
            }
            let evals = (0..*count)
                .map(|j| {
                    let p = Polynomial::random_isotropic(cfg.n, cfg.d, *k, &mut stream(cfg.seed, TAG_POLY, j as u64))?;
                    evaluator(&p)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((evals, format!("isotropic(count={count}, k={k}, coefficients iid N(0,1) on all monomials)")))
        }
    }
}

/// Counts of `p > 0` for each evaluator over batches `[lo, hi)`; every batch comes from its own stream.
fn accept_counts<F>(evals: &[Box<dyn BatchEvaluator>], cfg: &FoolingConfig, draw: F) -> Result<Vec<u64>>
where
    F: Fn(u64, &mut [f64]) -> Result<()> + Sync,
{
    let width = cfg.n * cfg.d;
    let chunks = cfg.trials.div_ceil(CHUNK);
    let partial = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Vec<u64>> {
            let lo = c * CHUNK;
            let len = (cfg.trials - lo).min(CHUNK) as usize;
            let mut pts = vec![0.0; len * width];
            for (j, batch) in pts.chunks_exact_mut(width).enumerate() {
                draw(lo + j as u64, batch)?;
            }
            let mut vals = vec![0.0; len];
            Ok(evals
                .iter()
                .map(|e| {
                    e.eval_batch(&pts, &mut vals);
                    vals.iter().filter(|v| **v > 0.0).count() as u64
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = vec![0u64; evals.len()];
    for part in partial {
        total.iter_mut().zip(part).for_each(|(t, p)| *t += p);
    }
    Ok(total)
}

/// Runs every polynomial on the same null and alternative batches.
pub fn fooling_gap_experiment(
    ensemble: &Ensemble,
    component: &Component,
    direction: &Direction,
    cfg: &FoolingConfig,
) -> Result<FoolingReport> {
    if cfg.d == 0 || cfg.n == 0 || cfg.trials == 0 {
        return Err(contract("d, n and trials must be >= 1"));
    }
    if let Direction::Fixed(v) = direction {
        if v.len() != cfg.d {
            return Err(contract(format!("fixed direction has length {} != d = {}", v.len(), cfg.d)));
        }
        check_unit(v)?;
    }
    let (evals, label) = build_evaluators(ensemble, cfg)?;
    let null = accept_counts(&evals, cfg, |b, out| {
        let x = SampleMatrix::gaussian(cfg.n, cfg.d, &mut stream(cfg.seed, TAG_NULL, b));
        out.copy_from_slice(x.as_slice());
        Ok(())
    })?;
    let alt = accept_counts(&evals, cfg, |b, out| {
        let v = match direction {
            Direction::Fresh => sample_unit_sphere(cfg.d, &mut stream(cfg.seed, TAG_DIRECTION, b)),
            Direction::Fixed(v) => v.clone(),
        };
        let model = HiddenDirectionModel::new(component.clone(), v)?;
        let mut rng = stream(cfg.seed, TAG_ALT, b);
        for row in out.chunks_exact_mut(cfg.d) {
            model.sample_into(&mut rng, row)?;
        }
        Ok(())
    })?;
    let per_polynomial: Vec<PolyGap> = null
        .iter()
        .zip(&alt)
        .enumerate()
        .map(|(index, (&s0, &s1))| {
            let null_accept = Proportion::new(s0, cfg.trials);
            let alt_accept = Proportion::new(s1, cfg.trials);
            PolyGap {
                index,
                gap: 2.0 * (alt_accept.estimate - null_accept.estimate).abs(),
                stderr: 2.0 * (alt_accept.stderr.powi(2) + null_accept.stderr.powi(2)).sqrt(),
                null_accept,
                alt_accept,
            }
        })
        .collect();
    let best = per_polynomial
        .iter()
        .max_by(|a, b| a.gap.total_cmp(&b.gap))
        .expect("ensemble is nonempty");
    Ok(FoolingReport {
        config: cfg.clone(),
        ensemble: label,
        direction: match direction {
            Direction::Fresh => "fresh uniform per batch".into(),
            Direction::Fixed(_) => "fixed".into(),
        },
        argmax: best.index,
        max_gap: best.gap,
        max_stderr: best.stderr,
        per_polynomial,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanShiftControl {
    pub mean: f64,
    pub cosine: f64,
    pub threshold: f64,
    pub report: FoolingReport,
}

/// A non-matching control: the hidden coordinate is `N(mean, 1)` along a fixed
/// `v`, and the test is `sum_i v_hat . x_i > n |m_hat| / 2` with `m_hat` the
/// mean of held-out draws and `v_hat = m_hat / |m_hat|`.
pub fn mean_shift_control(cfg: &FoolingConfig, mean: f64) -> Result<MeanShiftControl> {
    let v = sample_unit_sphere(cfg.d, &mut stream(cfg.seed, TAG_DIRECTION, u64::MAX));
    let component = Component::Shifted { mean };
    let model = HiddenDirectionModel::new(component.clone(), v.clone())?;
    let mut rng = stream(cfg.seed, TAG_HELDOUT, 0);
    let mut m_hat = vec![0.0; cfg.d];
    let mut row = vec![0.0; cfg.d];
    for _ in 0..HELDOUT_SAMPLES {
        model.sample_into(&mut rng, &mut row)?;
        m_hat.iter_mut().zip(&row).for_each(|(m, x)| *m += x / HELDOUT_SAMPLES as f64);
    }
    let len = norm(&m_hat);
    let v_hat: Vec<f64> = m_hat.iter().map(|m| m / len).collect();
    let threshold = cfg.n as f64 * len / 2.0;
    let mut terms: Vec<(Vec<u32>, f64)> = vec![(vec![], -threshold)];
    for i in 0..cfg.n {
        for (j, &c) in v_hat.iter().enumerate() {
            terms.push((vec![(i * cfg.d + j) as u32], c));
        }
    }
    let p = Polynomial::from_terms(cfg.n, cfg.d, 1, terms)?;
    let report = fooling_gap_experiment(&Ensemble::Explicit(vec![p]), &component, &Direction::Fixed(v.clone()), cfg)?;
    Ok(MeanShiftControl {
        mean,
        cosine: v_hat.iter().zip(&v).map(|(a, b)| a * b).sum(),
        threshold,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::build_prop_c2;

    fn cfg(d: usize, n: usize, trials: u64, seed: u64) -> FoolingConfig {
        FoolingConfig { d, n, trials, seed }
    }

    #[test]
    fn gaussian_component_has_no_gap() {
        let c = cfg(8, 3, 4000, 5);
        let rep = fooling_gap_experiment(&Ensemble::RandomIsotropic { count: 4, k: 2 }, &Component::Gaussian, &Direction::Fresh, &c)
            .unwrap();
        assert_eq!(rep.per_polynomial.len(), 4);
        for g in &rep.per_polynomial {
            assert!(g.gap <= 3.0 * g.stderr, "{g:?}");
        }
    }

    #[test]
    fn linear_acceptance_matches_closed_form() {
        // p = x_{0,0} - 0.5: acceptance 1 - Phi(0.5) under the null.
        let p = Polynomial::from_terms(2, 3, 1, [(vec![0], 1.0), (vec![], -0.5)]).unwrap();
        let rep = fooling_gap_experiment(&Ensemble::Explicit(vec![p]), &Component::Gaussian, &Direction::Fresh, &cfg(3, 2, 20_000, 2))
            .unwrap();
        let want = 1.0 - crate::stats::normal_cdf(0.5);
        let g = &rep.per_polynomial[0];
        for prop in [g.null_accept, g.alt_accept] {
            assert!((prop.estimate - want).abs() < 3.0 * prop.stderr + 1e-12, "{prop:?}");
        }
    }

    #[test]
    fn shifted_coordinate_is_detected_with_fixed_direction() {
        // p = x_{0,0}: the alternative puts N(2, 1) there.
        let p = Polynomial::from_terms(1, 2, 1, [(vec![0], 1.0)]).unwrap();
        let rep = fooling_gap_experiment(
            &Ensemble::Explicit(vec![p]),
            &Component::Shifted { mean: 2.0 },
            &Direction::Fixed(vec![1.0, 0.0]),
            &cfg(2, 1, 20_000, 3),
        )
        .unwrap();
        let want = 2.0 * (crate::stats::normal_cdf(2.0) - 0.5);
        assert!((rep.max_gap - want).abs() < 3.0 * rep.max_stderr, "{rep:?}");
    }

    #[test]
    fn deterministic_and_evaluator_independent() {
        let a = build_prop_c2(2, 2.0).unwrap();
        let comp = Component::MomentMatched(a);
        let c = cfg(4, 2, 700, 11);
        let e = Ensemble::RandomIsotropic { count: 2, k: 3 };
        let r1 = fooling_gap_experiment(&e, &comp, &Direction::Fresh, &c).unwrap();
        let r2 = fooling_gap_experiment(&e, &comp, &Direction::Fresh, &c).unwrap();
        assert_eq!(r1, r2);
        // Dense and sparse evaluation agree on the same degree-2 polynomial.
        let p = Polynomial::random_isotropic(2, 4, 2, &mut stream(11, TAG_POLY, 0)).unwrap();
        let dense = fooling_gap_experiment(&Ensemble::Explicit(vec![p.clone()]), &comp, &Direction::Fresh, &c).unwrap();
        let sparse = fooling_gap_experiment(&Ensemble::RandomIsotropic { count: 1, k: 2 }, &comp, &Direction::Fresh, &c).unwrap();
        assert_eq!(dense.per_polynomial, sparse.per_polynomial);
    }

    #[test]
    fn mean_shift_control_small() {
        let ctl = mean_shift_control(&cfg(32, 4, 2000, 8), 3.0).unwrap();
        assert!(ctl.cosine > 0.9, "{}", ctl.cosine);
        assert!(ctl.report.max_gap >= 0.5, "{:?}", ctl.report);
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = cfg(3, 2, 10, 1);
        assert!(fooling_gap_experiment(&Ensemble::Explicit(vec![]), &Component::Gaussian, &Direction::Fresh, &c).is_err());
        let wrong = Polynomial::constant(1, 3, 1.0);
        assert!(fooling_gap_experiment(&Ensemble::Explicit(vec![wrong]), &Component::Gaussian, &Direction::Fresh, &c).is_err());
        let p = Polynomial::constant(2, 3, 1.0);
        let e = Ensemble::Explicit(vec![p]);
        assert!(fooling_gap_experiment(&e, &Component::Gaussian, &Direction::Fixed(vec![1.0, 0.0]), &c).is_err());
        assert!(fooling_gap_experiment(&e, &Component::Gaussian, &Direction::Fixed(vec![1.0, 1.0, 0.0]), &c).is_err());
    }
}
