//! Exact derivative tensors `∇^t p(X)` and their Frobenius norms.

use super::multiset::{permutation_count, MultisetIndexer};
use super::polynomial::Polynomial;
use super::samples::SampleMatrix;
use super::tensor::{checked_size, DerivTensor};
use crate::error::{contract, Result};

/// Visit every size-`t` sub-multiset `S` of the sorted list `vars`, with the
/// falling-factorial factor of `∂_S x^vars` and the leftover variables.
pub fn for_each_sub_multiset(vars: &[u32], t: usize, mut f: impl FnMut(&[u32], f64, &[u32])) {
    if t > vars.len() {
        return;
    }
    let mut runs: Vec<(u32, usize)> = Vec::new();
    for &v in vars {
        match runs.last_mut() {
            Some((last, c)) if *last == v => *c += 1,
            _ => runs.push((v, 1)),
        }
    }
    let mut sub = Vec::with_capacity(t);
    let mut rest = Vec::with_capacity(vars.len());
    rec(&runs, 0, t, 1.0, &mut sub, &mut rest, &mut f);

    fn rec(
        runs: &[(u32, usize)],
        at: usize,
        left: usize,
        factor: f64,
        sub: &mut Vec<u32>,
        rest: &mut Vec<u32>,
        f: &mut impl FnMut(&[u32], f64, &[u32]),
    ) {
        if at == runs.len() {
            if left == 0 {
                f(sub, factor, rest);
            }
            return;
        }
        let (v, c) = runs[at];
        let remaining_after: usize = runs[at + 1..].iter().map(|r| r.1).sum();
        let lo = left.saturating_sub(remaining_after);
        for s in lo..=c.min(left) {
            // m!/(m-s)!
            let ff: f64 = ((c - s + 1)..=c).map(|x| x as f64).product();
            for _ in 0..s {
                sub.push(v);
            }
            for _ in 0..c - s {
                rest.push(v);
            }
            rec(runs, at + 1, left - s, factor * ff, sub, rest, f);
            sub.truncate(sub.len() - s);
            rest.truncate(rest.len() - (c - s));
        }
    }
}

fn check_dims(p: &Polynomial, x: &SampleMatrix) -> Result<()> {
    if x.n() != p.n() || x.d() != p.d() {
        return Err(contract(format!("sample matrix {}x{} vs polynomial {}x{}", x.n(), x.d(), p.n(), p.d())));
    }
    Ok(())
}

fn product_at(vars: &[u32], x: &[f64]) -> f64 {
    vars.iter().map(|&v| x[v as usize]).product()
}

/// Dense `∇^t p(X)`, side `n * d`, entry `(i1,j1,...,it,jt)` at flat position of `(i1*d+j1, ...)`.
pub fn grad_tensor(p: &Polynomial, x: &SampleMatrix, t: usize, cap: u128) -> Result<DerivTensor> {
    check_dims(p, x)?;
    let side = p.nvars();
    let mut out = DerivTensor::zeros(t, side, cap)?;
    let xs = x.as_slice();
    {
        let entries = out.entries_mut();
        for (vars, c) in p.terms() {
            for_each_sub_multiset(vars, t, |sub, factor, rest| {
                let flat = sub.iter().fold(0usize, |acc, &v| acc * side + v as usize);
                entries[flat] += c * factor * product_at(rest, xs);
            });
        }
    }
    // Fill unsorted index tuples from their sorted representative.
    let len = out.entries().len();
    for f in 0..len {
        let mut idx = out.multi_index(f);
        if idx.windows(2).all(|w| w[0] <= w[1]) {
            continue;
        }
        idx.sort_unstable();
        let src = out.flat_index(&idx);
        let v = out.entries()[src];
        out.entries_mut()[f] = v;
    }
    Ok(out)
}

/// Gradient `∇p(X)` as a flat vector of length `n * d`.
pub fn gradient(p: &Polynomial, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; p.nvars()];
    for (vars, c) in p.terms() {
        for (pos, &v) in vars.iter().enumerate() {
            if pos > 0 && vars[pos - 1] == v {
                continue;
            }
            let mult = vars.iter().filter(|&&w| w == v).count() as f64;
            let mut m = c * mult;
            let mut skipped = false;
            for &w in vars {
                if w == v && !skipped {
                    skipped = true;
                    continue;
                }
                m *= x[w as usize];
            }
            g[v as usize] += m;
        }
    }
    g
}

/// Reusable accumulators for [`grad_norms`].
#[derive(Debug, Clone)]
pub struct NormWorkspace {
    indexer: MultisetIndexer,
    max_t: usize,
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl NormWorkspace {
    pub fn new(nvars: usize, max_t: usize, cap: u128) -> Result<Self> {
        let indexer = MultisetIndexer::new(nvars, max_t);
        checked_size(indexer.len(), 1, cap)?;
        let mut weights = vec![0.0; indexer.len()];
        for t in 0..=max_t {
            for m in indexer.multisets(t) {
                weights[indexer.rank(&m)] = permutation_count(&m);
            }
        }
        Ok(NormWorkspace { values: vec![0.0; indexer.len()], weights, indexer, max_t })
    }
}

/// `‖∇^t p(X)‖_F` for t = 0..=max_t without materializing the tensors.
pub fn grad_norms(p: &Polynomial, x: &SampleMatrix, ws: &mut NormWorkspace) -> Result<Vec<f64>> {
    check_dims(p, x)?;
    if ws.indexer.n() != p.nvars() {
        return Err(contract("norm workspace built for a different variable count"));
    }
    ws.values.iter_mut().for_each(|v| *v = 0.0);
    let xs = x.as_slice();
    for (vars, c) in p.terms() {
        for t in 0..=ws.max_t.min(vars.len()) {
            for_each_sub_multiset(vars, t, |sub, factor, rest| {
                ws.values[ws.indexer.rank(sub)] += c * factor * product_at(rest, xs);
            });
        }
    }
    Ok((0..=ws.max_t)
        .map(|t| {
            let lo = ws.indexer.offset(t);
            let hi = ws.indexer.offset(t + 1);
            (lo..hi).map(|r| ws.values[r] * ws.values[r] * ws.weights[r]).sum::<f64>().sqrt()
        })
        .collect())
}

/// `‖∇^k p‖_F` for the top degree `k = p.degree_bound()`; constant in X.
pub fn top_order_norm(p: &Polynomial) -> f64 {
    let k = p.degree_bound();
    let kf: f64 = (1..=k).map(|i| i as f64).product();
    let mut acc = 0.0;
    for (vars, c) in p.terms() {
        if vars.len() != k {
            continue;
        }
        let perm = permutation_count(vars);
        // (c * prod m!)^2 * k!/prod m! = c^2 * k! * prod m! = c^2 * k!^2 / perm
        acc += c * c * kf * kf / perm;
    }
    acc.sqrt()
}
