//! Sparse polynomials over `n * d` variables.
//!
//! Terms are stored as sorted variable lists with repetition (`x_3^2 x_7` is
//! `[3, 3, 7]`) in a flat arena ordered by (degree, lexicographic vars).
//! Zero coefficients are never stored.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;

use super::multiset::for_each_multiset;
use super::samples::SampleMatrix;
use crate::error::{contract, LabError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    n: usize,
    d: usize,
    k: usize,
    starts: Vec<u32>,
    vars: Vec<u32>,
    coeffs: Vec<f64>,
}

fn term_order(a: &[u32], b: &[u32]) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

impl Polynomial {
    pub fn zero(n: usize, d: usize, k: usize) -> Self {
        Polynomial { n, d, k, starts: vec![0], vars: Vec::new(), coeffs: Vec::new() }
    }

    pub fn constant(n: usize, d: usize, c: f64) -> Self {
        Self::from_terms(n, d, 0, [(Vec::new(), c)]).expect("constant polynomial")
    }

    /// `sum_var coeffs[var] * x_var`.
    pub fn linear(n: usize, d: usize, coeffs: &[f64]) -> Result<Self> {
        if coeffs.len() != n * d {
            return Err(contract(format!("linear coefficient length {} != {}", coeffs.len(), n * d)));
        }
        Self::from_terms(n, d, 1, coeffs.iter().enumerate().map(|(i, &c)| (vec![i as u32], c)))
    }

    /// Build from (variable list, coefficient) pairs; duplicates are summed and zeros dropped.
    pub fn from_terms<I>(n: usize, d: usize, k: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u32>, f64)>,
    {
        let nvars = (n * d) as u32;
        let mut list: Vec<(Vec<u32>, f64)> = Vec::new();
        for (mut vars, c) in terms {
            if !c.is_finite() {
                return Err(contract("non-finite coefficient"));
            }
            if vars.len() > k {
                return Err(contract(format!("monomial degree {} exceeds bound {k}", vars.len())));
            }
            if let Some(&bad) = vars.iter().find(|&&v| v >= nvars) {
                return Err(contract(format!("variable {bad} out of range for n*d = {nvars}")));
            }
            vars.sort_unstable();
            list.push((vars, c));
        }
        list.sort_by(|a, b| term_order(&a.0, &b.0));
        let mut out = Polynomial::zero(n, d, k);
        let mut i = 0;
        while i < list.len() {
            let mut c = list[i].1;
            let mut j = i + 1;
            while j < list.len() && list[j].0 == list[i].0 {
                c += list[j].1;
                j += 1;
            }
            if c != 0.0 {
                out.push_term(&list[i].0, c)?;
            }
            i = j;
        }
        Ok(out)
    }

    /// Build from dense exponent vectors of length `n * d`.
    pub fn from_exponents<I>(n: usize, d: usize, k: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u32>, f64)>,
    {
        let mut converted = Vec::new();
        for (exps, c) in terms {
            if exps.len() != n * d {
                return Err(contract(format!("exponent vector length {} != {}", exps.len(), n * d)));
            }
            let mut vars = Vec::new();
            for (v, &e) in exps.iter().enumerate() {
                for _ in 0..e {
                    vars.push(v as u32);
                }
            }
            converted.push((vars, c));
        }
        Self::from_terms(n, d, k, converted)
    }

    fn push_term(&mut self, vars: &[u32], c: f64) -> Result<()> {
        self.vars.extend_from_slice(vars);
        let end = u32::try_from(self.vars.len())
            .map_err(|_| LabError::Resource { required: self.vars.len() as u128, cap: u32::MAX as u128 })?;
        self.starts.push(end);
        self.coeffs.push(c);
        Ok(())
    }

    /// Isotropic ensemble: an i.i.d. N(0,1) coefficient on every monomial of degree <= k,
    /// drawn in canonical term order.
    pub fn random_isotropic<R: Rng + ?Sized>(n: usize, d: usize, k: usize, rng: &mut R) -> Result<Self> {
        let nvars = n * d;
        let mut total_terms: u128 = 0;
        let mut total_vars: u128 = 0;
        for r in 0..=k {
            let c = super::multiset::multiset_count(nvars, r);
            total_terms += c;
            total_vars += c * r as u128;
        }
        if total_vars > u32::MAX as u128 {
            return Err(LabError::Resource { required: total_vars, cap: u32::MAX as u128 });
        }
        let mut p = Polynomial {
            n,
            d,
            k,
            starts: Vec::with_capacity(total_terms as usize + 1),
            vars: Vec::with_capacity(total_vars as usize),
            coeffs: Vec::with_capacity(total_terms as usize),
        };
        p.starts.push(0);
        for r in 0..=k {
            for_each_multiset(nvars, r, |m| {
                let c: f64 = rng.sample(StandardNormal);
                p.vars.extend_from_slice(m);
                p.starts.push(p.vars.len() as u32);
                p.coeffs.push(c);
            });
        }
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of variables `n * d`.
    pub fn nvars(&self) -> usize {
        self.n * self.d
    }

    pub fn degree_bound(&self) -> usize {
        self.k
    }

    /// Largest stored monomial degree (0 for the zero polynomial).
    pub fn degree(&self) -> usize {
        (0..self.num_terms()).map(|i| self.term_vars(i).len()).max().unwrap_or(0)
    }

    pub fn num_terms(&self) -> usize {
        self.coeffs.len()
    }

    pub fn term_vars(&self, i: usize) -> &[u32] {
        &self.vars[self.starts[i] as usize..self.starts[i + 1] as usize]
    }

    pub fn coeff(&self, i: usize) -> f64 {
        self.coeffs[i]
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], f64)> + '_ {
        (0..self.num_terms()).map(move |i| (self.term_vars(i), self.coeffs[i]))
    }

    /// Raw arena: (term starts, variables, coefficients).
    pub fn arena(&self) -> (&[u32], &[u32], &[f64]) {
        (&self.starts, &self.vars, &self.coeffs)
    }

    /// Coefficient of the monomial with the given (unsorted) variable list.
    pub fn coefficient_of(&self, vars: &[u32]) -> f64 {
        let mut key = vars.to_vec();
        key.sort_unstable();
        let mut lo = 0;
        let mut hi = self.num_terms();
        while lo < hi {
            let mid = (lo + hi) / 2;
            match term_order(self.term_vars(mid), &key) {
                Ordering::Less => lo = mid + 1,
                Ordering::Greater => hi = mid,
                Ordering::Equal => return self.coeffs[mid],
            }
        }
        0.0
    }

    pub fn eval(&self, x: &SampleMatrix) -> Result<f64> {
        if x.n() != self.n || x.d() != self.d {
            return Err(contract(format!(
                "sample matrix {}x{} does not match polynomial {}x{}",
                x.n(),
                x.d(),
                self.n,
                self.d
            )));
        }
        Ok(self.eval_flat(x.as_slice()))
    }

    /// Evaluate at a flat point of length `n * d` (unchecked).
    pub fn eval_flat(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.num_terms() {
            let mut m = self.coeffs[i];
            for &v in self.term_vars(i) {
                m *= x[v as usize];
            }
            acc += m;
        }
        acc
    }

    /// Exact partial derivative with respect to variable `var`.
    pub fn partial(&self, var: u32) -> Polynomial {
        let mut terms = Vec::new();
        for (vars, c) in self.terms() {
            let mult = vars.iter().filter(|&&v| v == var).count();
            if mult == 0 {
                continue;
            }
            let pos = vars.iter().position(|&v| v == var).unwrap();
            let mut rest = vars.to_vec();
            rest.remove(pos);
            terms.push((rest, c * mult as f64));
        }
        Polynomial::from_terms(self.n, self.d, self.k.saturating_sub(1), terms).expect("partial of valid polynomial")
    }

    /// Exact `D_{i,v} p = sum_j v_j dp/dx^{(i)}_j`.
    pub fn directional(&self, i: usize, v: &[f64]) -> Polynomial {
        let mut terms = Vec::new();
        for (j, &vj) in v.iter().enumerate() {
            if vj == 0.0 {
                continue;
            }
            let part = self.partial((i * self.d + j) as u32);
            terms.extend(part.terms().map(|(vars, c)| (vars.to_vec(), c * vj)));
        }
        Polynomial::from_terms(self.n, self.d, self.k.saturating_sub(1), terms).expect("directional of valid polynomial")
    }

    /// Text form: header `n d k`, then one `coeff e_1 ... e_{n*d}` line per term.
    pub fn to_text(&self) -> String {
        let nvars = self.nvars();
        let mut s = format!("{} {} {}\n", self.n, self.d, self.k);
        let mut exps = vec![0u32; nvars];
        for (vars, c) in self.terms() {
            exps.iter_mut().for_each(|e| *e = 0);
            for &v in vars {
                exps[v as usize] += 1;
            }
            write!(s, "{c:e}").unwrap();
            for e in &exps {
                write!(s, " {e}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| contract("empty polynomial text"))?;
        let h: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| contract(format!("bad header token {t:?}"))))
            .collect::<Result<_>>()?;
        if h.len() != 3 {
            return Err(contract("header must be `n d k`"));
        }
        let (n, d, k) = (h[0], h[1], h[2]);
        let mut terms = Vec::new();
        for line in lines {
            let mut toks = line.split_whitespace();
            let c: f64 = toks
                .next()
                .ok_or_else(|| contract("missing coefficient"))?
                .parse()
                .map_err(|_| contract(format!("bad coefficient in {line:?}")))?;
            let exps: Vec<u32> = toks
                .map(|t| t.parse().map_err(|_| contract(format!("bad exponent {t:?}"))))
                .collect::<Result<_>>()?;
            terms.push((exps, c));
        }
        Self::from_exponents(n, d, k, terms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, TAG_POLY};

    #[test]
    fn eval_examples() {
        let x = SampleMatrix::from_rows(&[vec![2.0, 5.0], vec![-1.0, 3.0]]).unwrap();
        assert_eq!(Polynomial::constant(2, 2, 7.0).eval(&x).unwrap(), 7.0);
        // x^{(1)}_1 x^{(2)}_2 -> vars 0 and 3
        let p = Polynomial::from_terms(2, 2, 2, [(vec![0, 3], 1.0)]).unwrap();
        assert_eq!(p.eval(&x).unwrap(), 6.0);
        assert_eq!(Polynomial::zero(2, 2, 3).eval(&x).unwrap(), 0.0);
        assert!(p.eval(&SampleMatrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn duplicates_merge_and_zeros_drop() {
        let p = Polynomial::from_terms(1, 3, 2, [(vec![2, 0], 1.5), (vec![0, 2], -1.5), (vec![1], 2.0)]).unwrap();
        assert_eq!(p.num_terms(), 1);
        assert_eq!(p.coefficient_of(&[1]), 2.0);
        assert_eq!(p.coefficient_of(&[0, 2]), 0.0);
    }

    #[test]
    fn rejects_degree_and_range_violations() {
        assert!(Polynomial::from_terms(1, 2, 1, [(vec![0, 1], 1.0)]).is_err());
        assert!(Polynomial::from_terms(1, 2, 2, [(vec![2], 1.0)]).is_err());
    }

    #[test]
    fn isotropic_term_count() {
        let p = Polynomial::random_isotropic(2, 2, 3, &mut stream(1, TAG_POLY, 0)).unwrap();
        assert_eq!(p.num_terms(), 1 + 4 + 10 + 20);
        assert_eq!(p.degree(), 3);
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let p = Polynomial::random_isotropic(2, 3, 3, &mut stream(5, TAG_POLY, 1)).unwrap();
        let q = Polynomial::from_text(&p.to_text()).unwrap();
        assert_eq!(p, q);
        for i in 0..p.num_terms() {
            assert_eq!(p.coeff(i).to_bits(), q.coeff(i).to_bits());
        }
    }

    #[test]
    fn partial_derivative_of_square() {
        let p = Polynomial::from_terms(1, 2, 3, [(vec![0, 0, 1], 2.0), (vec![1], 4.0)]).unwrap();
        let dp = p.partial(0);
        assert_eq!(dp.coefficient_of(&[0, 1]), 4.0);
        assert_eq!(dp.num_terms(), 1);
        let dq = p.partial(1);
        assert_eq!(dq.coefficient_of(&[0, 0]), 2.0);
        assert_eq!(dq.coefficient_of(&[]), 4.0);
    }
}
