//! Dense evaluation of degree <= 2 polynomials on many points at once:
//! `p(x) = c + b·x + x^T Q x` with `Q` upper triangular, batched through a GEMM.

use super::polynomial::Polynomial;
use crate::error::{contract, Result};

/// Something that can evaluate a polynomial on a batch of flat points.
pub trait BatchEvaluator: Sync {
    fn nvars(&self) -> usize;
    /// `points` holds `out.len()` points of length `nvars`, one after another.
    fn eval_batch(&self, points: &[f64], out: &mut [f64]);
}

impl BatchEvaluator for Polynomial {
    fn nvars(&self) -> usize {
        Polynomial::nvars(self)
    }

    fn eval_batch(&self, points: &[f64], out: &mut [f64]) {
        let n = Polynomial::nvars(self);
        for (o, x) in out.iter_mut().zip(points.chunks_exact(n)) {
            *o = self.eval_flat(x);
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuadraticForm {
    nvars: usize,
    c: f64,
    b: Vec<f64>,
    /// Row-major `nvars x nvars`; `q[a][b]` is the coefficient of `x_a x_b` for a <= b.
    q: Vec<f64>,
}

impl QuadraticForm {
    pub fn from_polynomial(p: &Polynomial) -> Result<Self> {
        let n = p.nvars();
        let mut out = QuadraticForm { nvars: n, c: 0.0, b: vec![0.0; n], q: vec![0.0; n * n] };
        for (vars, coef) in p.terms() {
            match vars {
                [] => out.c += coef,
                [a] => out.b[*a as usize] += coef,
                [a, b] => out.q[*a as usize * n + *b as usize] += coef,
                _ => return Err(contract("quadratic form needs degree <= 2")),
            }
        }
        Ok(out)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut out = [0.0];
        self.eval_batch(x, &mut out);
        out[0]
    }
}

impl BatchEvaluator for QuadraticForm {
    fn nvars(&self) -> usize {
        self.nvars
    }

    fn eval_batch(&self, points: &[f64], out: &mut [f64]) {
        let n = self.nvars;
        let m = out.len();
        assert_eq!(points.len(), n * m, "point buffer length");
        // Y (m x n) = X (m x n) Q^T, so Y[j][a] = sum_b Q[a][b] X[j][b].
        let mut y = vec![0.0; m * n];
        unsafe {
            matrixmultiply::dgemm(
                m,
                n,
                n,
                1.0,
                points.as_ptr(),
                n as isize,
                1,
                self.q.as_ptr(),
                1,
                n as isize,
                0.0,
                y.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        for (j, o) in out.iter_mut().enumerate() {
            let x = &points[j * n..(j + 1) * n];
            let yj = &y[j * n..(j + 1) * n];
            let mut acc = self.c;
            for a in 0..n {
                acc += x[a] * (self.b[a] + yj[a]);
            }
            *o = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, TAG_POINTS, TAG_POLY};
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn dense_matches_sparse() {
        let p = Polynomial::random_isotropic(3, 4, 2, &mut stream(2, TAG_POLY, 0)).unwrap();
        let qf = QuadraticForm::from_polynomial(&p).unwrap();
        let mut rng = stream(2, TAG_POINTS, 0);
        let pts: Vec<f64> = (0..12 * 7).map(|_| rng.sample(StandardNormal)).collect();
        let mut a = vec![0.0; 7];
        let mut b = vec![0.0; 7];
        qf.eval_batch(&pts, &mut a);
        p.eval_batch(&pts, &mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-11 * y.abs().max(1.0));
        }
    }

    #[test]
    fn rejects_cubic() {
        let p = Polynomial::from_terms(1, 2, 3, [(vec![0, 0, 1], 1.0)]).unwrap();
        assert!(QuadraticForm::from_polynomial(&p).is_err());
    }
}
