//! Batched evaluation of `p`, `∇p` and the directional restriction for
//! [`LANES`] independent `(X, v)` pairs in structure-of-arrays layout.
//!
//! One pass over the term arena serves every lane, which keeps the large
//! polynomials of the derivative-decay experiment memory-bound rather than
//! term-bound.

use super::multiset::MultisetIndexer;
use super::polynomial::Polynomial;
use crate::error::{contract, Result};

pub const LANES: usize = 32;

/// Largest degree the kernel's fixed subset buffer supports.
pub const KERNEL_MAX_DEGREE: usize = 6;

type Lane = [f64; LANES];

#[derive(Debug, Clone)]
pub struct LaneBlock {
    /// `x[var][lane]`, var = i * d + j.
    pub x: Vec<Lane>,
    /// `u[j][lane]`: direction coordinate j per lane.
    pub u: Vec<Lane>,
}

impl LaneBlock {
    pub fn zeros(nvars: usize, d: usize) -> Self {
        LaneBlock { x: vec![[0.0; LANES]; nvars], u: vec![[0.0; LANES]; d] }
    }

    pub fn set_point(&mut self, lane: usize, x: &[f64]) {
        for (row, &v) in self.x.iter_mut().zip(x) {
            row[lane] = v;
        }
    }

    pub fn set_direction(&mut self, lane: usize, v: &[f64]) {
        for (row, &c) in self.u.iter_mut().zip(v) {
            row[lane] = c;
        }
    }
}

#[derive(Debug, Clone)]
pub struct LaneJets {
    /// Restriction coefficients `jet[rank][lane]` (rank order of the slot indexer).
    pub jet: Vec<Lane>,
    /// `grad[var][lane]`, filled only when requested.
    pub grad: Vec<Lane>,
}

impl LaneJets {
    pub fn lane_coeffs(&self, lane: usize) -> Vec<f64> {
        self.jet.iter().map(|row| row[lane]).collect()
    }

    pub fn lane_grad_norm_sq(&self, lane: usize) -> f64 {
        self.grad.iter().map(|row| row[lane] * row[lane]).sum()
    }
}

pub struct JetKernel<'a> {
    poly: &'a Polynomial,
    slot_of: Vec<u32>,
    coord_of: Vec<u32>,
    indexer: MultisetIndexer,
}

#[inline(always)]
fn mul(a: &Lane, b: &Lane) -> Lane {
    let mut o = [0.0; LANES];
    for l in 0..LANES {
        o[l] = a[l] * b[l];
    }
    o
}

#[inline(always)]
fn add_assign(a: &mut Lane, b: &Lane) {
    for l in 0..LANES {
        a[l] += b[l];
    }
}

impl<'a> JetKernel<'a> {
    pub fn new(poly: &'a Polynomial) -> Result<Self> {
        if poly.degree_bound() > KERNEL_MAX_DEGREE {
            return Err(contract(format!("kernel supports degree <= {KERNEL_MAX_DEGREE}")));
        }
        let d = poly.d();
        let nvars = poly.nvars();
        let slot_of = (0..nvars).map(|v| (v / d) as u32).collect();
        let coord_of = (0..nvars).map(|v| (v % d) as u32).collect();
        let indexer = MultisetIndexer::new(poly.n(), poly.degree_bound());
        Ok(JetKernel { poly, slot_of, coord_of, indexer })
    }

    pub fn jet_len(&self) -> usize {
        self.indexer.len()
    }

    pub fn output(&self) -> LaneJets {
        LaneJets { jet: vec![[0.0; LANES]; self.jet_len()], grad: vec![[0.0; LANES]; self.poly.nvars()] }
    }

    pub fn run(&self, block: &LaneBlock, want_grad: bool, out: &mut LaneJets) {
        for row in out.jet.iter_mut() {
            *row = [0.0; LANES];
        }
        if want_grad {
            for row in out.grad.iter_mut() {
                *row = [0.0; LANES];
            }
        }
        let (starts, vars, coeffs) = self.poly.arena();
        let mut prods = [[0.0f64; LANES]; 1 << KERNEL_MAX_DEGREE];
        let mut meta = [(0usize, 0usize); 1 << KERNEL_MAX_DEGREE];
        let mut prefix = [[0.0f64; LANES]; KERNEL_MAX_DEGREE + 1];
        for term in 0..coeffs.len() {
            let tv = &vars[starts[term] as usize..starts[term + 1] as usize];
            let c = coeffs[term];
            prods[0] = [c; LANES];
            meta[0] = (0, 0);
            let mut count = 1;
            for &var in tv {
                let var = var as usize;
                let xv = &block.x[var];
                let uv = &block.u[self.coord_of[var] as usize];
                let slot = self.slot_of[var] as usize;
                for e in 0..count {
                    let (partial, size) = meta[e];
                    prods[count + e] = mul(&prods[e], uv);
                    meta[count + e] = (partial + self.indexer.step(slot, size), size + 1);
                    prods[e] = mul(&prods[e], xv);
                }
                count *= 2;
            }
            for e in 0..count {
                let (partial, size) = meta[e];
                add_assign(&mut out.jet[self.indexer.offset(size) + partial], &prods[e]);
            }
            if want_grad && !tv.is_empty() {
                // prefix[j] = c * x_{v_0} ... x_{v_{j-1}}; walk back with a running suffix.
                let r = tv.len();
                prefix[0] = [c; LANES];
                for j in 0..r {
                    prefix[j + 1] = mul(&prefix[j], &block.x[tv[j] as usize]);
                }
                let mut suffix = [1.0f64; LANES];
                for j in (0..r).rev() {
                    let contrib = mul(&prefix[j], &suffix);
                    add_assign(&mut out.grad[tv[j] as usize], &contrib);
                    suffix = mul(&suffix, &block.x[tv[j] as usize]);
                }
            }
        }
    }
}
