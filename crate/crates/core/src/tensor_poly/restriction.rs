//! Directional restriction `q(s) = p(X + sum_i s_i v e_i)`.
//!
//! `q` is a dense polynomial in `n` variables of degree <= k. Its Taylor
//! coefficients at 0 give every directional tensor: for a sorted slot tuple
//! with multiplicity vector `a`, `p^{[t],v}_{i_1..i_t}(X) = a! c_a`.
//! Moving sample `i` along `v` by `xi` is a Taylor shift of `q` in `s_i`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use super::kernel::KERNEL_MAX_DEGREE;
use super::multiset::{counts, factorial, from_counts, MultisetIndexer};
use super::polynomial::Polynomial;
use super::samples::{check_unit, SampleMatrix};
use super::tensor::{checked_size, DerivTensor};
use crate::error::{contract, Result};

/// Index data shared by every restriction with the same `(n, k)`.
#[derive(Debug)]
struct Layout {
    indexer: MultisetIndexer,
    /// `alpha!` per rank, `alpha` the multiplicity vector of the rank's monomial.
    alpha_fact: Vec<f64>,
    /// `|alpha|! alpha!` per rank, the weight of `c_alpha^2` in the squared norm.
    norm_weight: Vec<f64>,
    /// `shift[slot][r]`: `(target rank, C(a, b), a - b)` for `b = 0..=a`, `a = alpha_r[slot]`.
    shift: Vec<Vec<Vec<(usize, f64, usize)>>>,
}

impl Layout {
    fn build(n: usize, k: usize) -> Self {
        let indexer = MultisetIndexer::new(n, k);
        let mut alphas = Vec::with_capacity(indexer.len());
        for t in 0..=k {
            for m in indexer.multisets(t) {
                alphas.push(counts(&m, n));
            }
        }
        let alpha_fact: Vec<f64> =
            alphas.iter().map(|a| a.iter().map(|&x| factorial(x as usize)).product()).collect();
        let norm_weight = alphas
            .iter()
            .zip(&alpha_fact)
            .map(|(a, f)| factorial(a.iter().sum::<u32>() as usize) * f)
            .collect();
        let shift = (0..n)
            .map(|slot| {
                alphas
                    .iter()
                    .map(|alpha| {
                        let a = alpha[slot];
                        let mut beta = alpha.clone();
                        let mut binom = 1.0;
                        let mut out = Vec::with_capacity(a as usize + 1);
                        // (s + xi)^a = sum_b C(a,b) xi^(a-b) s^b
                        for b in (0..=a).rev() {
                            beta[slot] = b;
                            out.push((indexer.rank(&from_counts(&beta)), binom, (a - b) as usize));
                            // C(a, b-1) = C(a, b) * b / (a - b + 1)
                            binom = binom * b as f64 / (a - b + 1) as f64;
                        }
                        out
                    })
                    .collect()
            })
            .collect();
        Layout { indexer, alpha_fact, norm_weight, shift }
    }

    fn shared(n: usize, k: usize) -> Arc<Layout> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Layout>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
        guard.entry((n, k)).or_insert_with(|| Arc::new(Layout::build(n, k))).clone()
    }

    fn norm_sq(&self, coeffs: &[f64], t: usize) -> f64 {
        if t > self.indexer.max_size() {
            return 0.0;
        }
        (self.indexer.offset(t)..self.indexer.offset(t + 1))
            .map(|r| self.norm_weight[r] * coeffs[r] * coeffs[r])
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct DirectionalRestriction {
    layout: Arc<Layout>,
    coeffs: Vec<f64>,
}

impl DirectionalRestriction {
    /// Restriction of `p` at `X` along `v` (checked unit norm).
    pub fn new(p: &Polynomial, x: &SampleMatrix, v: &[f64]) -> Result<Self> {
        check_unit(v)?;
        Self::new_unchecked(p, x, v)
    }

    /// As [`Self::new`] without the unit-norm check.
    pub fn new_unchecked(p: &Polynomial, x: &SampleMatrix, v: &[f64]) -> Result<Self> {
        if x.n() != p.n() || x.d() != p.d() || v.len() != p.d() {
            return Err(contract("restriction dimensions do not match the polynomial"));
        }
        let n = p.n();
        let d = p.d();
        let k = p.degree_bound();
        let mut r = Self::empty(n, k);
        let indexer = &r.layout.indexer;
        let xs = x.as_slice();
        // (product, colex partial rank, subset size)
        let mut buf: Vec<(f64, usize, usize)> = Vec::with_capacity(1 << k);
        for (vars, c) in p.terms() {
            buf.clear();
            buf.push((c, 0, 0));
            for &var in vars {
                let var = var as usize;
                let slot = var / d;
                let xv = xs[var];
                let uv = v[var % d];
                let len = buf.len();
                for e in 0..len {
                    let (prod, partial, size) = buf[e];
                    buf.push((prod * uv, partial + indexer.step(slot, size), size + 1));
                    buf[e].0 = prod * xv;
                }
            }
            for &(prod, partial, size) in &buf {
                r.coeffs[indexer.offset(size) + partial] += prod;
            }
        }
        Ok(r)
    }

    fn empty(n: usize, k: usize) -> Self {
        let layout = Layout::shared(n, k);
        let coeffs = vec![0.0; layout.indexer.len()];
        DirectionalRestriction { layout, coeffs }
    }

    /// Build from raw coefficients in rank order (used by the batched kernel).
    pub fn from_coeffs(n: usize, k: usize, coeffs: Vec<f64>) -> Result<Self> {
        let layout = Layout::shared(n, k);
        if coeffs.len() != layout.indexer.len() {
            return Err(contract("restriction coefficient length mismatch"));
        }
        Ok(DirectionalRestriction { layout, coeffs })
    }

    pub fn n(&self) -> usize {
        self.layout.indexer.n()
    }

    pub fn degree(&self) -> usize {
        self.layout.indexer.max_size()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient of `s^alpha`.
    pub fn coefficient(&self, alpha: &[u32]) -> f64 {
        let total: u32 = alpha.iter().sum();
        if total as usize > self.degree() {
            return 0.0;
        }
        self.coeffs[self.layout.indexer.rank(&from_counts(alpha))]
    }

    /// `p(X)`.
    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// `‖p^{[t],v}(X)‖_F^2 = sum_{|a|=t} t! a! c_a^2`.
    pub fn norm_sq(&self, t: usize) -> f64 {
        self.layout.norm_sq(&self.coeffs, t)
    }

    pub fn norm(&self, t: usize) -> f64 {
        self.norm_sq(t).sqrt()
    }

    /// Dense `p^{[t],v}(X)` with side `n`.
    pub fn tensor(&self, t: usize, cap: u128) -> Result<DerivTensor> {
        let n = self.n();
        let len = checked_size(n, t, cap)?;
        let mut entries = vec![0.0; len];
        if t <= self.degree() {
            let mut idx = vec![0u32; t];
            for (f, e) in entries.iter_mut().enumerate() {
                let mut rem = f;
                for slot in idx.iter_mut().rev() {
                    *slot = (rem % n) as u32;
                    rem /= n;
                }
                let mut sorted = idx.clone();
                sorted.sort_unstable();
                let r = self.layout.indexer.rank(&sorted);
                *e = self.layout.alpha_fact[r] * self.coeffs[r];
            }
        }
        DerivTensor::new(t, n, entries)
    }

    /// Restriction at `X` with sample `slot` moved by `xi * v`.
    pub fn shifted(&self, slot: usize, xi: f64) -> Self {
        let mut out = DirectionalRestriction { layout: self.layout.clone(), coeffs: vec![0.0; self.coeffs.len()] };
        self.shift_into(slot, xi, &mut out.coeffs);
        out
    }

    /// Taylor shift into a caller-owned coefficient buffer of the same layout.
    pub fn shift_into(&self, slot: usize, xi: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|c| *c = 0.0);
        let mut pows = [1.0f64; KERNEL_MAX_DEGREE + 1];
        let k = self.degree().min(KERNEL_MAX_DEGREE);
        for e in 1..=k {
            pows[e] = pows[e - 1] * xi;
        }
        for (r, &c) in self.coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for &(target, binom, e) in &self.layout.shift[slot][r] {
                let pw = if e <= k { pows[e] } else { xi.powi(e as i32) };
                out[target] += c * binom * pw;
            }
        }
    }

    /// `p` along the line through sample `slot`, with `‖p^{[t],v}‖^2` for t = 1..=k
    /// written into `norms_sq`.
    pub fn line_profile_into(&self, slot: usize, xi: f64, scratch: &mut Vec<f64>, norms_sq: &mut [f64]) -> f64 {
        scratch.resize(self.coeffs.len(), 0.0);
        self.shift_into(slot, xi, scratch);
        for (t, n2) in norms_sq.iter_mut().enumerate() {
            *n2 = self.layout.norm_sq(scratch, t + 1);
        }
        scratch[0]
    }

    /// Values `(p, ‖p^{[1]}‖^2, ..., ‖p^{[k]}‖^2)` along the line through sample `slot`.
    pub fn line_profile(&self, slot: usize, xi: f64, scratch: &mut Vec<f64>) -> (f64, Vec<f64>) {
        let mut norms = vec![0.0; self.degree()];
        let value = self.line_profile_into(slot, xi, scratch, &mut norms);
        (value, norms)
    }

    /// Coefficients of the univariate polynomial `xi -> p` along sample `slot`, lowest first.
    pub fn line_polynomial(&self, slot: usize) -> Vec<f64> {
        let n = self.n();
        (0..=self.degree())
            .map(|a| {
                let mut alpha = vec![0u32; n];
                alpha[slot] = a as u32;
                self.coefficient(&alpha)
            })
            .collect()
    }
}

/// Dense `p^{[t],v}(X)`, side `n`.
pub fn dir_deriv_tensor(p: &Polynomial, x: &SampleMatrix, v: &[f64], t: usize, cap: u128) -> Result<DerivTensor> {
    check_unit(v)?;
    checked_size(p.n(), t, cap)?;
    DirectionalRestriction::new(p, x, v)?.tensor(t, cap)
}
