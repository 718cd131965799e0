//! Dispatch from a validated configuration to the owning module.

use std::time::Instant;

use serde_json::{json, Value};

use super::config::{
    Echo, Experiment, ExperimentConfig, DEFAULT_C_G, DEFAULT_C_TRUNC, DEFAULT_SEED,
};
use super::report::{artifact_version, num, opt, ExperimentReport, Table, Verdict};
use crate::advantage::{
    c1_experiment, fooling_gap_experiment, gap_separation, gap_separation_at, mean_shift_control, C1Config, Direction,
    Ensemble, FoolingConfig,
};
use crate::anticoncentration::{
    empirical_fact_3_2, empirical_lemma_3_1, sphere_w_point, DecayReport, DirectionalDecayConfig, SlowGrowthConfig,
};
use crate::distributions::{build_with_eps, eps_floor, sample_moment_audit, Component};
use crate::error::Result;
use crate::mollifier::{derivative_decay_probe, mollifier_suite, DecayProbeConfig, DisagreementConfig};
use crate::rng::derive_seed;
use crate::stats::{gaussian_moment, Proportion};

/// Isotropic polynomials in the fooling-gap ensemble.
pub const FOOLING_POLYNOMIALS: usize = 20;
/// Mean of the shifted hidden coordinate in the fooling-gap control.
pub const CONTROL_MEAN: f64 = 3.0;
/// Target advantage for the gap-separation demo.
pub const SEPARATION_GAMMA: f64 = 0.1;
/// Comparison epsilon for fact32.
pub const FACT32_REFERENCE_EPS: f64 = 0.2;
const DECAY_SWEEP: [usize; 4] = [4, 16, 64, 256];
const SPHERE_SWEEP_D: [usize; 5] = [2, 4, 8, 16, 64];
const SPHERE_SWEEP_T: [usize; 3] = [1, 2, 3];
const PROBE_SWEEP: [usize; 3] = [16, 64, 256];
const SUITE_POOL: usize = 16;
const PROBE_POOL: usize = 32;
const PROBE_STEP: f64 = 1e-3;

struct Outcome {
    echo: Echo,
    table: Table,
    payload: Value,
    verdicts: Vec<Verdict>,
}

fn echo(exp: Experiment, pairs: &[(&str, String)]) -> Echo {
    let mut out = vec![("experiment".to_string(), exp.name().to_string())];
    out.extend(pairs.iter().map(|(k, v)| (k.to_string(), v.clone())));
    out
}

fn auto<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "auto".into(), |x| x.to_string())
}

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("result serializes")
}

fn prop_cells(p: &Proportion) -> [String; 3] {
    [num(p.estimate), num(p.wilson_lo), num(p.wilson_hi)]
}

/// Runs a validated configuration and times it.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let exp = cfg.validate()?;
    let start = Instant::now();
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let out = match exp {
        Experiment::MomentMatch => moment_match(cfg)?,
        Experiment::SampleAudit => sample_audit(cfg, seed)?,
        Experiment::Decay => decay(cfg, seed)?,
        Experiment::Fact32 => fact32(cfg, seed)?,
        Experiment::SphereW => sphere_w(cfg)?,
        Experiment::MollifierProbe => mollifier_probe(cfg, seed)?,
        Experiment::C1Test => c1_test(cfg, seed)?,
        Experiment::GapSeparation => gap(cfg)?,
        Experiment::FoolingGap => fooling(cfg, seed)?,
    };
    let mut config = out.echo;
    config.push(("format".into(), cfg.format.unwrap_or_default().name().into()));
    Ok(ExperimentReport {
        experiment: exp,
        version: artifact_version(),
        config,
        wall_time_s: start.elapsed().as_secs_f64(),
        table: out.table,
        payload: out.payload,
        verdicts: out.verdicts,
    })
}

fn moment_match(cfg: &ExperimentConfig) -> Result<Outcome> {
    let m = cfg.m.unwrap_or(6);
    let r = cfg.r.unwrap_or(3.0);
    let a = build_with_eps(m, r, cfg.eps)?;
    let mut table = Table::new("moment_match/v1", &["t", "analytic_moment", "gaussian_moment", "abs_error"]);
    let mut worst: f64 = 0.0;
    for t in 0..=m as u32 {
        let (am, gm) = (a.analytic_moment(t), gaussian_moment(t));
        worst = worst.max((am - gm).abs());
        table.push(vec![t.to_string(), num(am), num(gm), num((am - gm).abs())]);
    }
    let floor = eps_floor(m, r);
    let verdicts = vec![
        Verdict::new("moments_match", worst <= 1e-8, format!("max |error| = {worst:e} (limit 1e-8)")),
        Verdict::new(
            "density_nonnegative",
            a.audit.min_density >= 0.0,
            format!("min density on the {:e} grid = {:e}", a.audit.grid_step, a.audit.min_density),
        ),
        Verdict::new("eps_above_floor", a.eps >= floor, format!("eps = {:e}, floor = {floor:e}", a.eps)),
    ];
    Ok(Outcome {
        echo: echo(Experiment::MomentMatch, &[("m", m.to_string()), ("r", num(r)), ("eps", auto(cfg.eps))]),
        table,
        payload: to_value(&a),
        verdicts,
    })
}

fn sample_audit(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let m = cfg.m.unwrap_or(6);
    let r = cfg.r.unwrap_or(3.0);
    let d = cfg.d.unwrap_or(16);
    let top = cfg.t.unwrap_or(m.max(2) + 2);
    let draws = cfg.trials.unwrap_or(100_000);
    let a = build_with_eps(m, r, cfg.eps)?;
    let rows = sample_moment_audit(&a, d, top as u32, draws, seed)?;
    let mut table = Table::new("sample_audit/v1", &["source", "t", "empirical", "target", "gaussian", "stderr", "z"]);
    for c in &rows {
        table.push(vec![c.source.clone(), c.t.to_string(), num(c.empirical), num(c.target), num(c.gaussian), num(c.stderr), num(c.z)]);
    }
    let worst = rows.iter().map(|c| c.z.abs()).fold(0.0, f64::max);
    Ok(Outcome {
        echo: echo(
            Experiment::SampleAudit,
            &[
                ("m", m.to_string()),
                ("r", num(r)),
                ("eps", auto(cfg.eps)),
                ("d", d.to_string()),
                ("t", top.to_string()),
                ("trials", draws.to_string()),
                ("seed", seed.to_string()),
            ],
        ),
        table,
        payload: json!({ "component": a, "checks": rows }),
        verdicts: vec![Verdict::new("moments_within_4_stderr", worst <= 4.0, format!("max |z| = {worst:.3}"))],
    })
}

fn decay_table(schema: &str, reports: &[DecayReport]) -> Table {
    let k = reports.first().map_or(0, |r| r.k);
    let mut cols: Vec<String> = ["d", "eps", "trials", "prob", "wilson_lo", "wilson_hi"].iter().map(|s| s.to_string()).collect();
    cols.extend((1..=k).map(|t| format!("median_ratio_t{t}")));
    cols.extend((1..=k).map(|t| format!("median_contraction_t{t}")));
    cols.push("contraction_violations".into());
    cols.push("slope_t1".into());
    let mut table = Table { schema: schema.into(), columns: cols, rows: Vec::new() };
    for r in reports {
        let mut row = vec![r.d.to_string(), num(r.eps), r.trials.to_string()];
        row.extend(prop_cells(&r.empirical_prob));
        row.extend(r.median_ratio.iter().map(|x| opt(*x)));
        row.extend((0..k).map(|t| opt(r.median_contraction.get(t).copied().flatten())));
        row.push(r.contraction_violations.to_string());
        row.push(opt(r.slope_fit));
        table.push(row);
    }
    table
}

fn decay(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let dcfg = DirectionalDecayConfig {
        k: cfg.k.unwrap_or(3),
        n: cfg.n.unwrap_or(2),
        d_sweep: cfg.d.map_or_else(|| DECAY_SWEEP.to_vec(), |d| vec![d]),
        eps: cfg.eps.unwrap_or(0.05),
        trials: cfg.trials.unwrap_or(2000),
        seed,
    };
    let reports = empirical_lemma_3_1(&dcfg)?;
    let mut verdicts: Vec<Verdict> = reports
        .iter()
        .map(|r| {
            Verdict::new(
                &format!("event_prob_d{}", r.d),
                r.empirical_prob.wilson_lo >= 0.90,
                format!("Wilson lower bound {:.4} (limit 0.90)", r.empirical_prob.wilson_lo),
            )
        })
        .collect();
    let violations: u64 = reports.iter().map(|r| r.contraction_violations).sum();
    verdicts.push(Verdict::new("contraction", violations == 0, format!("{violations} trials with ‖p^[t],v‖ > ‖∇^t p‖")));
    if let Some(slope) = reports.first().and_then(|r| r.slope_fit) {
        verdicts.push(Verdict::new("slope_t1", slope <= -0.25, format!("log-log slope {slope:.4} (limit -0.25)")));
    }
    Ok(Outcome {
        echo: echo(
            Experiment::Decay,
            &[
                ("d", auto(cfg.d)),
                ("n", dcfg.n.to_string()),
                ("k", dcfg.k.to_string()),
                ("eps", num(dcfg.eps)),
                ("trials", dcfg.trials.to_string()),
                ("seed", seed.to_string()),
            ],
        ),
        table: decay_table("decay/v1", &reports),
        payload: json!({ "config": dcfg, "reports": reports }),
        verdicts,
    })
}

fn fact32(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let eps = cfg.eps.unwrap_or(0.05);
    let base = SlowGrowthConfig {
        k: cfg.k.unwrap_or(3),
        n: cfg.n.unwrap_or(2),
        d: cfg.d.unwrap_or(16),
        eps,
        trials: cfg.trials.unwrap_or(10_000),
        seed,
    };
    let reports = [eps, FACT32_REFERENCE_EPS]
        .iter()
        .enumerate()
        .map(|(j, &e)| empirical_fact_3_2(&SlowGrowthConfig { eps: e, seed: derive_seed(seed, j as u64), ..base.clone() }))
        .collect::<Result<Vec<_>>>()?;
    let (lo, hi) = (&reports[0].empirical_prob, &reports[1].empirical_prob);
    let pooled = (lo.stderr.powi(2) + hi.stderr.powi(2)).sqrt();
    let verdicts = vec![
        Verdict::new(
            "monotone_in_eps",
            lo.estimate <= hi.estimate + 2.0 * pooled,
            format!("frac({eps}) = {:.4}, frac({FACT32_REFERENCE_EPS}) = {:.4}, pooled se {pooled:.4}", lo.estimate, hi.estimate),
        ),
        Verdict::new(
            "reference_fraction",
            hi.wilson_hi <= 0.6,
            format!("frac({FACT32_REFERENCE_EPS}) Wilson upper bound {:.4} (limit 0.6)", hi.wilson_hi),
        ),
    ];
    Ok(Outcome {
        echo: echo(
            Experiment::Fact32,
            &[
                ("d", base.d.to_string()),
                ("n", base.n.to_string()),
                ("k", base.k.to_string()),
                ("eps", num(eps)),
                ("trials", base.trials.to_string()),
                ("seed", seed.to_string()),
            ],
        ),
        table: decay_table("fact32/v1", &reports),
        payload: to_value(&reports),
        verdicts,
    })
}

fn sphere_w(cfg: &ExperimentConfig) -> Result<Outcome> {
    let ds = cfg.d.map_or_else(|| SPHERE_SWEEP_D.to_vec(), |d| vec![d]);
    let ts = cfg.t.map_or_else(|| SPHERE_SWEEP_T.to_vec(), |t| vec![t]);
    let mut points = Vec::new();
    for &d in &ds {
        for &t in &ts {
            points.push(sphere_w_point(d, t)?);
        }
    }
    let mut table = Table::new(
        "sphere_w/v1",
        &["d", "t", "w_frobenius", "double_factorial_bound", "double_factorial_holds", "closed_form_bound", "closed_form_holds"],
    );
    for p in &points {
        table.push(vec![
            p.d.to_string(),
            p.t.to_string(),
            num(p.norm),
            num(p.double_factorial_bound),
            p.double_factorial_holds.to_string(),
            num(p.closed_form_bound),
            p.closed_form_holds.to_string(),
        ]);
    }
    let bound_fails = points.iter().filter(|p| !p.double_factorial_holds).count();
    let mut verdicts = vec![Verdict::new(
        "double_factorial_bound",
        bound_fails == 0,
        format!("{bound_fails} of {} points exceed (2t-1)!! d^(-t/2)", points.len()),
    )];
    let first: Vec<_> = points.iter().filter(|p| p.t == 1).collect();
    if !first.is_empty() {
        let worst = first
            .iter()
            .map(|p| ((p.norm - (p.d as f64).powf(-0.5)) / f64::EPSILON / p.norm).abs())
            .fold(0.0, f64::max);
        verdicts.push(Verdict::new("t1_equality", worst <= 2.0, format!("max deviation from d^(-1/2): {worst:.1} ulp")));
    }
    Ok(Outcome {
        echo: echo(Experiment::SphereW, &[("d", auto(cfg.d)), ("t", auto(cfg.t))]),
        table,
        payload: to_value(&points),
        verdicts,
    })
}

fn mollifier_probe(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let c_g = cfg.c_g.unwrap_or(DEFAULT_C_G);
    let c_trunc = cfg.c_trunc.unwrap_or(DEFAULT_C_TRUNC);
    let n = cfg.n.unwrap_or(2);
    match cfg.t {
        None => {
            let dcfg = DisagreementConfig {
                d: cfg.d.unwrap_or(64),
                n,
                k: cfg.k.unwrap_or(3),
                c_g,
                trials: cfg.trials.unwrap_or(10_000),
                pool: SUITE_POOL,
                seed,
            };
            let rep = mollifier_suite(&dcfg)?;
            let g = &rep.gaussian;
            let mut table = Table::new("mollifier_suite/v1", &["quantity", "value"]);
            let rows: [(&str, String); 9] = [
                ("plateau_exact", rep.plateau_exact.to_string()),
                ("zero_exact", rep.zero_exact.to_string()),
                ("trials", g.disagreement.trials.to_string()),
                ("sandwich_violations", g.sandwich_violations.to_string()),
                ("strict_decay_events", g.strict_decay_events.to_string()),
                ("strict_decay_violations", g.strict_decay_violations.to_string()),
                ("disagreement_rate", num(g.disagreement.estimate)),
                ("disagreement_wilson_lo", num(g.disagreement.wilson_lo)),
                ("disagreement_wilson_hi", num(g.disagreement.wilson_hi)),
            ];
            for (q, v) in rows {
                table.push(vec![q.into(), v]);
            }
            let verdicts = vec![
                Verdict::new("rho_plateau_and_zero", rep.plateau_exact && rep.zero_exact, "rho == 1 on [-0.999, 0.999], 0 for |x| >= 3"),
                Verdict::new("sandwich", g.sandwich_violations == 0, format!("{} violations of 0 <= h <= sign(p)", g.sandwich_violations)),
                Verdict::new(
                    "strict_decay_agreement",
                    g.strict_decay_violations == 0,
                    format!("{} of {} strict-decay points with h != sign(p)", g.strict_decay_violations, g.strict_decay_events),
                ),
                Verdict::new(
                    "disagreement_rate",
                    g.disagreement.wilson_hi <= 0.1,
                    format!("rate {:.4}, Wilson upper bound {:.4} (limit 0.1)", g.disagreement.estimate, g.disagreement.wilson_hi),
                ),
            ];
            Ok(Outcome {
                echo: echo(
                    Experiment::MollifierProbe,
                    &[
                        ("d", dcfg.d.to_string()),
                        ("n", n.to_string()),
                        ("k", dcfg.k.to_string()),
                        ("t", "auto".into()),
                        ("c-g", num(c_g)),
                        ("c-trunc", num(c_trunc)),
                        ("trials", dcfg.trials.to_string()),
                        ("seed", seed.to_string()),
                    ],
                ),
                table,
                payload: to_value(&rep),
                verdicts,
            })
        }
        Some(t) => {
            let pcfg = DecayProbeConfig {
                d_sweep: cfg.d.map_or_else(|| PROBE_SWEEP.to_vec(), |d| vec![d]),
                n,
                k: cfg.k.unwrap_or(2),
                c_g,
                c_trunc,
                step: PROBE_STEP,
                orders: vec![t],
                trials: cfg.trials.unwrap_or(20_000),
                pool: PROBE_POOL,
                slot: 0,
                seed,
            };
            let probe = derivative_decay_probe(&pcfg)?;
            let mut table = Table::new("mollifier_decay_probe/v1", &["d", "t", "trials", "well_behaved", "nonzero", "median"]);
            for r in &probe.rows {
                table.push(vec![
                    r.d.to_string(),
                    t.to_string(),
                    r.trials.to_string(),
                    r.well_behaved.to_string(),
                    r.nonzero[0].to_string(),
                    opt(r.median[0]),
                ]);
            }
            let mut verdicts = Vec::new();
            if let Some(slope) = probe.slopes[0] {
                let ceiling = probe.slope_ceilings[0];
                verdicts.push(Verdict::new(
                    &format!("slope_t{t}"),
                    slope <= ceiling,
                    format!("log-log slope {slope:.4} (ceiling {ceiling:.4})"),
                ));
            }
            Ok(Outcome {
                echo: echo(
                    Experiment::MollifierProbe,
                    &[
                        ("d", auto(cfg.d)),
                        ("n", n.to_string()),
                        ("k", pcfg.k.to_string()),
                        ("t", t.to_string()),
                        ("c-g", num(c_g)),
                        ("c-trunc", num(c_trunc)),
                        ("trials", pcfg.trials.to_string()),
                        ("seed", seed.to_string()),
                    ],
                ),
                table,
                payload: to_value(&probe),
                verdicts,
            })
        }
    }
}

fn c1_test(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let mut c = C1Config::new(cfg.d.unwrap_or(64), cfg.m.unwrap_or(2), cfg.n.unwrap_or(30_000), cfg.trials.unwrap_or(2000), seed);
    c.t = cfg.t;
    if let Some(mult) = cfg.r_multiplier {
        c.r_multiplier = mult;
    }
    c.eps_override = cfg.eps;
    let rep = c1_experiment(&c)?;
    let mut table = Table::new(
        "c1_test/v1",
        &["hypothesis", "flag_rate", "wilson_lo", "wilson_hi", "flags", "trials", "threshold", "t", "r", "a_eps"],
    );
    for (name, p) in [("null", &rep.null_flags), ("alternative", &rep.alt_flags)] {
        let mut row = vec![name.to_string()];
        row.extend(prop_cells(p));
        row.extend([p.successes.to_string(), p.trials.to_string(), num(rep.threshold), rep.t.to_string(), num(rep.r), num(rep.a_eps)]);
        table.push(row);
    }
    let verdicts = if cfg.eps == Some(0.0) {
        let se = (rep.null_flags.stderr.powi(2) + rep.alt_flags.stderr.powi(2)).sqrt();
        let diff = (rep.alt_flags.estimate - rep.null_flags.estimate).abs();
        vec![Verdict::new("no_separation", diff <= 3.0 * se, format!("|alt - null| = {diff:.4}, 3 se = {:.4}", 3.0 * se))]
    } else {
        vec![
            Verdict::new(
                "null_rate",
                rep.null_flags.wilson_hi <= 0.12,
                format!("null rate {:.4}, Wilson upper bound {:.4} (limit 0.12)", rep.null_flags.estimate, rep.null_flags.wilson_hi),
            ),
            Verdict::new(
                "alternative_rate",
                rep.alt_flags.wilson_lo >= 0.85,
                format!("alternative rate {:.4}, Wilson lower bound {:.4} (limit 0.85)", rep.alt_flags.estimate, rep.alt_flags.wilson_lo),
            ),
        ]
    };
    Ok(Outcome {
        echo: echo(
            Experiment::C1Test,
            &[
                ("d", c.d.to_string()),
                ("m", c.m.to_string()),
                ("n", c.n.to_string()),
                ("t", auto(cfg.t)),
                ("eps", auto(cfg.eps)),
                ("r-multiplier", num(c.r_multiplier)),
                ("trials", c.trials.to_string()),
                ("seed", seed.to_string()),
            ],
        ),
        table,
        payload: to_value(&rep),
        verdicts,
    })
}

fn gap(cfg: &ExperimentConfig) -> Result<Outcome> {
    let eps = cfg.eps.unwrap_or(0.25);
    let n = cfg.n.unwrap_or(1);
    let k = cfg.k.unwrap_or(4);
    let rep = match cfg.delta {
        None => gap_separation(eps, n, k, SEPARATION_GAMMA)?,
        Some(delta) => gap_separation_at(eps, n, k, delta, SEPARATION_GAMMA)?,
    };
    let mut table = Table::new("gap_separation/v1", &["method", "value"]);
    for r in &rep.rows {
        table.push(vec![r.method.clone(), num(r.value)]);
    }
    let sum = rep.threshold.null_error + rep.threshold.alt_error;
    let verdicts = vec![
        Verdict::new(
            "no_advantageous_polynomial",
            rep.advantage.gamma_null_variant <= SEPARATION_GAMMA,
            format!("gamma = {:e} (target {SEPARATION_GAMMA})", rep.advantage.gamma_null_variant),
        ),
        Verdict::new(
            "threshold_errors_sum_to_eps",
            (sum - eps).abs() <= 4.0 * f64::EPSILON * eps,
            format!("error sum {sum} vs eps {eps}"),
        ),
    ];
    Ok(Outcome {
        echo: echo(
            Experiment::GapSeparation,
            &[("eps", num(eps)), ("n", n.to_string()), ("k", k.to_string()), ("delta", auto(cfg.delta))],
        ),
        table,
        payload: to_value(&rep),
        verdicts,
    })
}

fn fooling(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let m = cfg.m.unwrap_or(4);
    let r = cfg.r.unwrap_or(2.0);
    let k = cfg.k.unwrap_or(2);
    let fcfg = FoolingConfig { d: cfg.d.unwrap_or(256), n: cfg.n.unwrap_or(8), trials: cfg.trials.unwrap_or(10_000), seed };
    let a = build_with_eps(m, r, cfg.eps)?;
    let rep = fooling_gap_experiment(
        &Ensemble::RandomIsotropic { count: FOOLING_POLYNOMIALS, k },
        &Component::MomentMatched(a.clone()),
        &Direction::Fresh,
        &fcfg,
    )?;
    let control = mean_shift_control(&fcfg, CONTROL_MEAN)?;
    let mut table = Table::new(
        "fooling_gap/v1",
        &["polynomial", "null_accept", "null_lo", "null_hi", "alt_accept", "alt_lo", "alt_hi", "gap", "stderr"],
    );
    let rows = rep.per_polynomial.iter().map(|g| (g.index.to_string(), g)).chain(
        control.report.per_polynomial.iter().map(|g| ("mean_shift_control".to_string(), g)),
    );
    for (name, g) in rows {
        let mut row = vec![name];
        row.extend(prop_cells(&g.null_accept));
        row.extend(prop_cells(&g.alt_accept));
        row.extend([num(g.gap), num(g.stderr)]);
        table.push(row);
    }
    let verdicts = vec![
        Verdict::new(
            "max_gap",
            rep.within(0.05),
            format!("max gap {:.4} at polynomial {}, limit 0.05 + 3 * {:.4}", rep.max_gap, rep.argmax, rep.max_stderr),
        ),
        Verdict::new(
            "mean_shift_detected",
            control.report.max_gap >= 0.5,
            format!("control gap {:.4} (limit 0.5), direction cosine {:.3}", control.report.max_gap, control.cosine),
        ),
    ];
    Ok(Outcome {
        echo: echo(
            Experiment::FoolingGap,
            &[
                ("d", fcfg.d.to_string()),
                ("m", m.to_string()),
                ("n", fcfg.n.to_string()),
                ("k", k.to_string()),
                ("r", num(r)),
                ("eps", auto(cfg.eps)),
                ("trials", fcfg.trials.to_string()),
                ("seed", seed.to_string()),
            ],
        ),
        table,
        payload: json!({ "component": a, "ensemble": rep, "control": control }),
        verdicts,
    })
}
