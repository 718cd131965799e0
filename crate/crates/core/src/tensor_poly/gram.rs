//! `‖∇^{k-1} p(X)‖_F^2` as a quadratic form in X.
//!
//! For a degree-k polynomial every order-(k-1) partial is affine:
//! `∂_S p(X) = c_S + L_S · X`. Weighting each sorted `S` by its number of
//! orderings gives `‖∇^{k-1} p(X)‖^2 = c0 + 2 b·X + X^T G X` with
//! `G = L_w^T L_w`, assembled in row chunks with a GEMM.

use super::multiset::{permutation_count, MultisetIndexer};
use super::polynomial::Polynomial;
use crate::error::{contract, Result};

const CHUNK_ROWS: usize = 8192;

#[derive(Debug, Clone)]
pub struct PenultimateGram {
    nvars: usize,
    c0: f64,
    b: Vec<f64>,
    /// Row-major `nvars x nvars`.
    g: Vec<f64>,
}

impl PenultimateGram {
    pub fn new(p: &Polynomial) -> Result<Self> {
        let k = p.degree_bound();
        if k == 0 {
            return Err(contract("penultimate order needs degree >= 1"));
        }
        let nvars = p.nvars();
        let ix = MultisetIndexer::new(nvars, k - 1);
        let lo = ix.offset(k - 1);
        let rows = ix.offset(k) - lo;
        let mut consts = vec![0.0; rows];
        let mut lin = vec![0.0; rows * nvars];
        let mut sub: Vec<u32> = Vec::with_capacity(k);
        for (vars, c) in p.terms() {
            if vars.len() + 1 < k {
                continue;
            }
            // d_S x^m = (prod m_v!) x^(m - S) whenever m - S has at most one element.
            let ff = multiplicity_factorials(vars);
            if vars.len() + 1 == k {
                consts[ix.rank(vars) - lo] += c * ff;
                continue;
            }
            for pos in 0..vars.len() {
                if pos > 0 && vars[pos] == vars[pos - 1] {
                    continue;
                }
                sub.clear();
                sub.extend_from_slice(&vars[..pos]);
                sub.extend_from_slice(&vars[pos + 1..]);
                lin[(ix.rank(&sub) - lo) * nvars + vars[pos] as usize] += c * ff;
            }
        }
        let mut c0 = 0.0;
        let mut b = vec![0.0; nvars];
        let mut row_rank = lo;
        for t_sub in ix.multisets(k - 1) {
            let r = ix.rank(&t_sub) - lo;
            debug_assert_eq!(ix.rank(&t_sub), row_rank);
            row_rank += 1;
            let w = permutation_count(&t_sub).sqrt();
            consts[r] *= w;
            let row = &mut lin[r * nvars..(r + 1) * nvars];
            row.iter_mut().for_each(|v| *v *= w);
            c0 += consts[r] * consts[r];
            if consts[r] != 0.0 {
                for (bv, lv) in b.iter_mut().zip(row.iter()) {
                    *bv += consts[r] * lv;
                }
            }
        }
        let mut g = vec![0.0; nvars * nvars];
        let mut start = 0;
        while start < rows {
            let h = (rows - start).min(CHUNK_ROWS);
            let chunk = &lin[start * nvars..(start + h) * nvars];
            // G += L^T L for the row-major (h x nvars) chunk L.
            unsafe {
                matrixmultiply::dgemm(
                    nvars,
                    h,
                    nvars,
                    1.0,
                    chunk.as_ptr(),
                    1,
                    nvars as isize,
                    chunk.as_ptr(),
                    nvars as isize,
                    1,
                    1.0,
                    g.as_mut_ptr(),
                    nvars as isize,
                    1,
                );
            }
            start += h;
        }
        Ok(PenultimateGram { nvars, c0, b, g })
    }

    pub fn norm_sq(&self, x: &[f64]) -> f64 {
        let n = self.nvars;
        let mut quad = 0.0;
        for i in 0..n {
            let row = &self.g[i * n..(i + 1) * n];
            let gx: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            quad += x[i] * gx;
        }
        let lin: f64 = self.b.iter().zip(x).map(|(a, b)| a * b).sum();
        (self.c0 + 2.0 * lin + quad).max(0.0)
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        self.norm_sq(x).sqrt()
    }
}

fn multiplicity_factorials(sorted: &[u32]) -> f64 {
    let mut acc = 1.0;
    let mut run = 0.0;
    for (i, v) in sorted.iter().enumerate() {
        run = if i > 0 && sorted[i - 1] == *v { run + 1.0 } else { 1.0 };
        acc *= run;
    }
    acc
}
