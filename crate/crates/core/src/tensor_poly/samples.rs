use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{contract, Result};

/// `n` samples of dimension `d`, row-major. Variable `(i, j)` has flat index `i * d + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * d {
            return Err(contract(format!("sample data length {} != {n}x{d}", data.len())));
        }
        Ok(SampleMatrix { n, d, data })
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        SampleMatrix { n, d, data: vec![0.0; n * d] }
    }

    pub fn gaussian<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Self {
        let data = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
        SampleMatrix { n, d, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != d) {
            return Err(contract("ragged sample rows"));
        }
        Ok(SampleMatrix { n, d, data: rows.concat() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.d + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.d + j] = value;
    }

    /// Copy with `step * v` added to sample `i`.
    pub fn shifted(&self, i: usize, v: &[f64], step: f64) -> Self {
        let mut out = self.clone();
        for (x, vj) in out.row_mut(i).iter_mut().zip(v) {
            *x += step * vj;
        }
        out
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Checks `|‖v‖ - 1| <= 1e-12`.
pub fn check_unit(v: &[f64]) -> Result<()> {
    let nv = norm(v);
    if (nv - 1.0).abs() > 1e-12 {
        return Err(contract(format!("direction norm {nv} is not 1")));
    }
    Ok(())
}
