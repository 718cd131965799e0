//! Dense evaluation of cubic polynomials for many `(X, v)` pairs at once.
//!
//! With `Z(y)_{bc} = y_b y_c` over packed pairs `b <= c`, the cubic part's
//! gradient is `S Z(y)` for an `nvars x pairs` matrix `S`. Gradients come
//! from one GEMM against the stacked `Z(X)` columns, and the directional
//! jets from the projections `r_i = S^T V_i` contracted with polarized pairs.

use super::multiset::{permutation_count, MultisetIndexer};
use super::polynomial::Polynomial;
use super::samples::SampleMatrix;
use crate::error::{contract, LabError, Result};

/// Entry cap for the dense `S` matrix (800 MB of f64).
pub const CUBIC_DENSE_CAP: u128 = 100_000_000;

#[derive(Debug, Clone)]
pub struct CubicContraction {
    n: usize,
    d: usize,
    nvars: usize,
    pairs: usize,
    c: f64,
    b: Vec<f64>,
    /// Row-major symmetric `nvars x nvars`; the quadratic part is `x^T A x`.
    a: Vec<f64>,
    /// Row-major `nvars x pairs`.
    s: Vec<f64>,
    indexer: MultisetIndexer,
}

/// Value, gradient norm and restriction coefficients at one `(X, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicJet {
    pub coeffs: Vec<f64>,
    pub grad_norm_sq: f64,
}

fn pair_index(b: usize, c: usize, nvars: usize) -> usize {
    // Packed upper triangle, row b holds c = b..nvars.
    b * (2 * nvars - b + 1) / 2 + (c - b)
}

/// `r . B(y, z)` where `B(y, z)_{bc} = y_b z_c + y_c z_b` (`2 y_b z_b` on the diagonal),
/// with `y` and `z` zero outside the given ranges.
fn polarized_dot(
    r: &[f64],
    nvars: usize,
    y: &[f64],
    yr: std::ops::Range<usize>,
    z: &[f64],
    zr: std::ops::Range<usize>,
) -> f64 {
    let half = |u: &[f64], ur: &std::ops::Range<usize>, w: &[f64], wr: &std::ops::Range<usize>| {
        let mut acc = 0.0;
        for bb in ur.clone() {
            let lo = bb.max(wr.start);
            if lo >= wr.end || u[bb] == 0.0 {
                continue;
            }
            let row = pair_index(bb, lo, nvars);
            let seg = &r[row..row + (wr.end - lo)];
            let inner: f64 = seg.iter().zip(&w[lo..wr.end]).map(|(a, b)| a * b).sum();
            acc += u[bb] * inner;
        }
        acc
    };
    half(y, &yr, z, &zr) + half(z, &zr, y, &yr)
}

impl CubicContraction {
    pub fn new(p: &Polynomial) -> Result<Self> {
        if p.degree_bound() != 3 {
            return Err(LabError::Capability("dense contraction needs a degree-3 polynomial".into()));
        }
        let (n, d, nvars) = (p.n(), p.d(), p.nvars());
        let pairs = nvars * (nvars + 1) / 2;
        let need = pairs as u128 * nvars as u128;
        if need > CUBIC_DENSE_CAP {
            return Err(LabError::Resource { required: need, cap: CUBIC_DENSE_CAP });
        }
        let mut c = 0.0;
        let mut b = vec![0.0; nvars];
        let mut a = vec![0.0; nvars * nvars];
        let mut s = vec![0.0; nvars * pairs];
        for (vars, w) in p.terms() {
            match *vars {
                [] => c += w,
                [v] => b[v as usize] += w,
                [u, v] => {
                    let (u, v) = (u as usize, v as usize);
                    if u == v {
                        a[u * nvars + u] += w;
                    } else {
                        a[u * nvars + v] += 0.5 * w;
                        a[v * nvars + u] += 0.5 * w;
                    }
                }
                [x, y, z] => {
                    let tri = [x as usize, y as usize, z as usize];
                    for pos in 0..3 {
                        if pos > 0 && tri[pos] == tri[pos - 1] {
                            continue;
                        }
                        let e = tri[pos];
                        let mult = tri.iter().filter(|&&t| t == e).count() as f64;
                        let rest: Vec<usize> = (0..3).filter(|&q| q != pos).map(|q| tri[q]).collect();
                        s[e * pairs + pair_index(rest[0], rest[1], nvars)] += w * mult;
                    }
                }
                _ => return Err(contract("term degree exceeds the degree bound")),
            }
        }
        Ok(CubicContraction { n, d, nvars, pairs, c, b, a, s, indexer: MultisetIndexer::new(n, 3) })
    }

    pub fn jet_len(&self) -> usize {
        self.indexer.len()
    }

    fn fill_pairs(&self, x: &[f64], out: &mut [f64]) {
        let mut idx = 0;
        for bb in 0..self.nvars {
            let xb = x[bb];
            for cc in bb..self.nvars {
                out[idx] = xb * x[cc];
                idx += 1;
            }
        }
    }

    fn quad(&self, y: &[f64], z: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, yi) in y.iter().enumerate() {
            if *yi == 0.0 {
                continue;
            }
            let row = &self.a[i * self.nvars..(i + 1) * self.nvars];
            acc += yi * row.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
        }
        acc
    }

    /// Jets for a batch of points and unit directions (one direction per point).
    pub fn restrict_batch(&self, points: &[SampleMatrix], dirs: &[Vec<f64>]) -> Result<Vec<CubicJet>> {
        if points.len() != dirs.len() {
            return Err(contract("one direction per point"));
        }
        if points.iter().any(|x| x.n() != self.n || x.d() != self.d) || dirs.iter().any(|v| v.len() != self.d) {
            return Err(contract("point or direction shape does not match the polynomial"));
        }
        let (nv, np, d, n) = (self.nvars, self.pairs, self.d, self.n);
        let batch = points.len();
        if batch == 0 {
            return Ok(Vec::new());
        }
        // Z(X) per trial, trial-contiguous.
        let mut zmat = vec![0.0; batch * np];
        for (tr, x) in points.iter().enumerate() {
            self.fill_pairs(x.as_slice(), &mut zmat[tr * np..(tr + 1) * np]);
        }
        // grads[e + nv * tr] = (S Z(X_tr))_e
        let mut grads = vec![0.0; batch * nv];
        let mut vmat = vec![0.0; batch * d];
        for (tr, v) in dirs.iter().enumerate() {
            vmat[tr * d..(tr + 1) * d].copy_from_slice(v);
        }
        // r[i][tr * np + pair] = (S^T V_i)_pair, V_i = v in slot i.
        let mut r = vec![vec![0.0; batch * np]; n];
        unsafe {
            matrixmultiply::dgemm(
                nv,
                np,
                batch,
                1.0,
                self.s.as_ptr(),
                np as isize,
                1,
                zmat.as_ptr(),
                1,
                np as isize,
                0.0,
                grads.as_mut_ptr(),
                1,
                nv as isize,
            );
            for (i, ri) in r.iter_mut().enumerate() {
                matrixmultiply::dgemm(
                    np,
                    d,
                    batch,
                    1.0,
                    self.s.as_ptr().add(i * d * np),
                    1,
                    np as isize,
                    vmat.as_ptr(),
                    1,
                    d as isize,
                    0.0,
                    ri.as_mut_ptr(),
                    1,
                    np as isize,
                );
            }
        }
        let mut out = Vec::with_capacity(batch);
        let mut slot_vecs = vec![vec![0.0; nv]; n];
        for tr in 0..batch {
            let x = points[tr].as_slice();
            let v = &dirs[tr];
            for (i, sv) in slot_vecs.iter_mut().enumerate() {
                sv.iter_mut().for_each(|e| *e = 0.0);
                sv[i * d..(i + 1) * d].copy_from_slice(v);
            }
            let cubic_grad = &grads[tr * nv..(tr + 1) * nv];
            let ax: Vec<f64> = (0..nv).map(|e| self.a[e * nv..(e + 1) * nv].iter().zip(x).map(|(a, b)| a * b).sum()).collect();
            let grad: Vec<f64> = (0..nv).map(|e| self.b[e] + 2.0 * ax[e] + cubic_grad[e]).collect();
            let value = self.c
                + self.b.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                + ax.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                + cubic_grad.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() / 3.0;
            let slot = |i: usize| i * d..(i + 1) * d;
            let ri = |i: usize| &r[i][tr * np..(tr + 1) * np];
            let mut coeffs = vec![0.0; self.indexer.len()];
            coeffs[0] = value;
            for i in 0..n {
                coeffs[self.indexer.rank(&[i as u32])] = grad[slot(i)].iter().zip(v).map(|(a, b)| a * b).sum();
            }
            for i in 0..n {
                for j in i..n {
                    let hess = 2.0 * self.quad(&slot_vecs[i], &slot_vecs[j])
                        + polarized_dot(ri(i), nv, x, 0..nv, &slot_vecs[j], slot(j));
                    let alpha = [i as u32, j as u32];
                    coeffs[self.indexer.rank(&alpha)] = hess / multiplicity_factorials(&alpha);
                }
            }
            for i in 0..n {
                for j in i..n {
                    for l in j..n {
                        let third = polarized_dot(ri(i), nv, &slot_vecs[j], slot(j), &slot_vecs[l], slot(l));
                        let alpha = [i as u32, j as u32, l as u32];
                        coeffs[self.indexer.rank(&alpha)] = third / multiplicity_factorials(&alpha);
                    }
                }
            }
            out.push(CubicJet { coeffs, grad_norm_sq: grad.iter().map(|g| g * g).sum() });
        }
        Ok(out)
    }
}

fn multiplicity_factorials(sorted: &[u32]) -> f64 {
    let orderings = permutation_count(sorted);
    let total: f64 = (1..=sorted.len()).map(|i| i as f64).product();
    total / orderings
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::sample_unit_sphere;
    use crate::rng::{stream, TAG_DIRECTION, TAG_POINTS, TAG_POLY};
    use crate::tensor_poly::{gradient, DirectionalRestriction};

    fn check(n: usize, d: usize, seed: u64) {
        let p = Polynomial::random_isotropic(n, d, 3, &mut stream(seed, TAG_POLY, 0)).unwrap();
        let dense = CubicContraction::new(&p).unwrap();
        let points: Vec<SampleMatrix> =
            (0..5).map(|i| SampleMatrix::gaussian(n, d, &mut stream(seed, TAG_POINTS, i))).collect();
        let dirs: Vec<Vec<f64>> = (0..5).map(|i| sample_unit_sphere(d, &mut stream(seed, TAG_DIRECTION, i))).collect();
        let jets = dense.restrict_batch(&points, &dirs).unwrap();
        for ((x, v), jet) in points.iter().zip(&dirs).zip(&jets) {
            let q = DirectionalRestriction::new(&p, x, v).unwrap();
            for (a, b) in jet.coeffs.iter().zip(q.coeffs()) {
                assert!((a - b).abs() < 1e-10 * b.abs().max(1.0), "{a} vs {b}");
            }
            let g2: f64 = gradient(&p, x.as_slice()).iter().map(|g| g * g).sum();
            assert!((jet.grad_norm_sq - g2).abs() < 1e-10 * g2.max(1.0));
        }
    }

    #[test]
    fn matches_sparse_restriction() {
        check(2, 3, 1);
        check(3, 2, 2);
        check(1, 5, 3);
    }

    #[test]
    fn sparse_cubic_terms() {
        // x0^3 - 2 x0^2 x3 + x1 x2 x3 + x2^2 + 4 x1 - 1, with n = 2, d = 2.
        let p = Polynomial::from_terms(
            2,
            2,
            3,
            vec![(vec![0, 0, 0], 1.0), (vec![0, 0, 3], -2.0), (vec![1, 2, 3], 1.0), (vec![2, 2], 1.0), (vec![1], 4.0), (vec![], -1.0)],
        )
        .unwrap();
        let dense = CubicContraction::new(&p).unwrap();
        let x = SampleMatrix::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.25]]).unwrap();
        let v = vec![0.6, 0.8];
        let jet = &dense.restrict_batch(std::slice::from_ref(&x), std::slice::from_ref(&v)).unwrap()[0];
        let q = DirectionalRestriction::new(&p, &x, &v).unwrap();
        for (a, b) in jet.coeffs.iter().zip(q.coeffs()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn rejects_other_degrees_and_shapes() {
        let p = Polynomial::random_isotropic(1, 2, 2, &mut stream(0, TAG_POLY, 0)).unwrap();
        assert!(matches!(CubicContraction::new(&p), Err(LabError::Capability(_))));
        let p = Polynomial::random_isotropic(1, 2, 3, &mut stream(0, TAG_POLY, 0)).unwrap();
        let dense = CubicContraction::new(&p).unwrap();
        let x = SampleMatrix::zeros(2, 2);
        assert!(dense.restrict_batch(&[x], &[vec![1.0, 0.0]]).is_err());
    }
}
