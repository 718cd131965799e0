//! Samplers for the scalar component, the unit sphere and `M_{A,v}`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::moment_matched::MomentMatchedA;
use crate::error::{contract, LabError, Result};
use crate::stats::normal_pdf;
use crate::tensor_poly::{check_unit, dot};

const MAX_REJECTION_ITERS: u64 = 1_000_000;

/// The law of the hidden coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Component {
    Gaussian,
    MomentMatched(MomentMatchedA),
    /// N(mean, 1); a deliberately non-matching control.
    Shifted { mean: f64 },
}

impl Component {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        match self {
            Component::Gaussian => Ok(rng.sample(StandardNormal)),
            Component::MomentMatched(a) => sample_scalar(a, rng),
            Component::Shifted { mean } => Ok(mean + rng.sample::<f64, _>(StandardNormal)),
        }
    }
}

/// One draw from `A`: the atom with probability eps, else rejection from N(0,1).
pub fn sample_scalar<R: Rng + ?Sized>(a: &MomentMatchedA, rng: &mut R) -> Result<f64> {
    if a.eps > 0.0 && rng.random::<f64>() < a.eps {
        return Ok(a.r);
    }
    let envelope = 1.0 + a.audit.max_abs_bump / normal_pdf(1.0);
    for _ in 0..MAX_REJECTION_ITERS {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() >= 1.0 {
            // Outside the bump the target equals the proposal up to the envelope.
            if rng.random::<f64>() * envelope < 1.0 {
                return Ok(z);
            }
            continue;
        }
        let g = normal_pdf(z);
        let accept = (g + a.bump_at(z)) / (g * envelope);
        if rng.random::<f64>() < accept {
            return Ok(z);
        }
    }
    Err(LabError::Internal(format!("rejection sampler exceeded {MAX_REJECTION_ITERS} iterations")))
}

/// Uniform direction on `S^{d-1}`.
pub fn sample_unit_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    assert!(d >= 1, "sphere dimension must be positive");
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dot(&g, &g).sqrt();
        if norm > 1e-150 {
            return g.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// `M_{A,v}`: N(0, I - vv^T) plus an independent `A`-distributed coordinate along `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenDirectionModel {
    pub component: Component,
    pub v: Vec<f64>,
}

impl HiddenDirectionModel {
    pub fn new(component: Component, v: Vec<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(contract("hidden direction must have d >= 1"));
        }
        check_unit(&v)?;
        Ok(HiddenDirectionModel { component, v })
    }

    pub fn d(&self) -> usize {
        self.v.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.d()];
        self.sample_into(rng, &mut out)?;
        Ok(out)
    }

    /// Writes one draw into `out` (length `d`).
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> Result<()> {
        for o in out.iter_mut() {
            *o = rng.sample(StandardNormal);
        }
        let xi = self.component.sample(rng)?;
        let along = dot(out, &self.v);
        for (o, v) in out.iter_mut().zip(&self.v) {
            *o += (xi - along) * v;
        }
        Ok(())
    }
}

pub fn sample_hidden_direction<R: Rng + ?Sized>(model: &HiddenDirectionModel, rng: &mut R) -> Result<Vec<f64>> {
    model.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::build_prop_c2;
    use crate::rng::{stream, TAG_ALT, TAG_DIRECTION};
    use crate::stats::mean_var;

    #[test]
    fn sphere_is_unit_and_symmetric_in_1d() {
        let mut rng = stream(5, TAG_DIRECTION, 0);
        let mut plus = 0u64;
        let n = 10_000;
        for _ in 0..n {
            let v = sample_unit_sphere(1, &mut rng);
            assert!((v[0].abs() - 1.0).abs() < 1e-15);
            plus += (v[0] > 0.0) as u64;
        }
        let se = (0.25 / n as f64).sqrt();
        assert!((plus as f64 / n as f64 - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn gaussian_component_sample_moments() {
        let a = crate::distributions::build_with_eps(2, 2.0, Some(0.0)).unwrap();
        let mut rng = stream(6, TAG_ALT, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| sample_scalar(&a, &mut rng).unwrap()).collect();
        let (mean, var) = mean_var(&xs);
        let n = xs.len() as f64;
        assert!(mean.abs() < 3.0 * (1.0 / n).sqrt());
        assert!((var - 1.0).abs() < 3.0 * (2.0 / n).sqrt());
    }

    #[test]
    fn projection_is_orthogonal() {
        let v = vec![0.6, 0.0, 0.8];
        let a = build_prop_c2(2, 2.0).unwrap();
        let model = HiddenDirectionModel::new(Component::MomentMatched(a), v.clone()).unwrap();
        let mut rng = stream(7, TAG_ALT, 0);
        let x = model.sample(&mut rng).unwrap();
        assert_eq!(x.len(), 3);
        assert!(HiddenDirectionModel::new(Component::Gaussian, vec![1.0, 1.0]).is_err());
    }
}
