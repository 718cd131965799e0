//! Empirical moments of samples from `A` and `M_{A,v}` against their targets.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::moment_matched::MomentMatchedA;
use super::sampling::{sample_scalar, sample_unit_sphere, Component, HiddenDirectionModel};
use crate::error::{contract, Result};
use crate::rng::{stream, TAG_ALT, TAG_DIRECTION};
use crate::stats::gaussian_moment;
use crate::tensor_poly::dot;

const CHUNK: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    /// `scalar` (draws of A), `along` (`<x, v>` for x ~ M_{A,v}) or `across` (`<x, u>`, u orthogonal to v).
    pub source: String,
    pub t: u32,
    pub empirical: f64,
    pub target: f64,
    pub gaussian: f64,
    pub stderr: f64,
    /// `(empirical - target) / stderr`.
    pub z: f64,
}

/// Power sums `sum x^t` for t in `0..=top` over draws produced by `draw`.
fn power_sums<F>(draws: u64, top: u32, draw: F) -> Result<Vec<f64>>
where
    F: Fn(u64, &mut Vec<f64>) -> Result<()> + Sync,
{
    let parts = (0..draws.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| -> Result<Vec<f64>> {
            let len = (draws - c * CHUNK).min(CHUNK) as usize;
            let mut xs = Vec::with_capacity(len);
            draw(c, &mut xs)?;
            xs.truncate(len);
            let mut sums = vec![0.0; top as usize + 1];
            for x in xs {
                let mut p = 1.0;
                for s in sums.iter_mut() {
                    *s += p;
                    p *= x;
                }
            }
            Ok(sums)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = vec![0.0; top as usize + 1];
    for p in parts {
        total.iter_mut().zip(p).for_each(|(t, s)| *t += s);
    }
    Ok(total)
}

fn checks(source: &str, sums: &[f64], draws: u64, top: u32, target: impl Fn(u32) -> f64) -> Vec<MomentCheck> {
    let nf = draws as f64;
    (1..=top)
        .map(|t| {
            let empirical = sums[t as usize] / nf;
            let tgt = target(t);
            let stderr = ((target(2 * t) - tgt * tgt).max(0.0) / nf).sqrt();
            MomentCheck {
                source: source.into(),
                t,
                empirical,
                target: tgt,
                gaussian: gaussian_moment(t),
                stderr,
                z: if stderr > 0.0 { (empirical - tgt) / stderr } else { 0.0 },
            }
        })
        .collect()
}

/// Moments `t = 1..=top` of A, of `<x, v>` and of `<x, u>` for `x ~ M_{A,v}` in dimension `d >= 2`.
pub fn sample_moment_audit(a: &MomentMatchedA, d: usize, top: u32, draws: u64, seed: u64) -> Result<Vec<MomentCheck>> {
    if d < 2 || draws == 0 || top == 0 {
        return Err(contract("moment audit needs d >= 2, draws >= 1 and top >= 1"));
    }
    let v = sample_unit_sphere(d, &mut stream(seed, TAG_DIRECTION, 0));
    // A unit vector orthogonal to v: Gram-Schmidt on a second draw.
    let w = sample_unit_sphere(d, &mut stream(seed, TAG_DIRECTION, 1));
    let proj = dot(&w, &v);
    let mut u: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a - proj * b).collect();
    let len = dot(&u, &u).sqrt();
    u.iter_mut().for_each(|x| *x /= len);
    let model = HiddenDirectionModel::new(Component::MomentMatched(a.clone()), v.clone())?;

    let scalar = power_sums(draws, top, |c, xs| {
        let mut rng = stream(seed, TAG_ALT, c);
        for _ in 0..CHUNK {
            xs.push(sample_scalar(a, &mut rng)?);
        }
        Ok(())
    })?;
    let projected = |dir: &[f64], index: u64| {
        power_sums(draws, top, |c, xs| {
            let mut rng = stream(seed, TAG_ALT ^ index, c);
            let mut x = vec![0.0; d];
            for _ in 0..CHUNK {
                model.sample_into(&mut rng, &mut x)?;
                xs.push(dot(&x, dir));
            }
            Ok(())
        })
    };
    let along = projected(&v, 1)?;
    let across = projected(&u, 2)?;
    let mut out = checks("scalar", &scalar, draws, top, |t| a.analytic_moment(t));
    out.extend(checks("along", &along, draws, top, |t| a.analytic_moment(t)));
    out.extend(checks("across", &across, draws, top, gaussian_moment));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::build_prop_c2;

    #[test]
    fn audit_agrees_with_targets() {
        let a = build_prop_c2(4, 2.0).unwrap();
        let rows = sample_moment_audit(&a, 8, 6, 50_000, 3).unwrap();
        assert_eq!(rows.len(), 18);
        for r in &rows {
            assert!(r.z.abs() < 4.0, "{r:?}");
            if r.t <= 4 {
                assert!((r.target - r.gaussian).abs() < 1e-8, "{r:?}");
            }
        }
        assert_eq!(rows, sample_moment_audit(&a, 8, 6, 50_000, 3).unwrap());
    }

    #[test]
    fn rejects_bad_sizes() {
        let a = build_prop_c2(2, 2.0).unwrap();
        assert!(sample_moment_audit(&a, 1, 4, 10, 1).is_err());
        assert!(sample_moment_audit(&a, 4, 0, 10, 1).is_err());
    }
}
