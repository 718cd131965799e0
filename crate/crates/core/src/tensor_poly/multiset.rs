//! Ranking of sorted multisets (monomials as sorted variable lists).
//!
//! A sorted multiset `a_0 <= a_1 <= ... <= a_{r-1}` over `0..n` maps to the
//! strictly increasing `b_j = a_j + j` and is ranked colexicographically:
//! `rank = offset(r) + sum_j C(b_j, j + 1)`. Sizes are laid out consecutively.

#[derive(Debug, Clone)]
pub struct MultisetIndexer {
    n: usize,
    max_size: usize,
    /// `binom[a][b] = C(a, b)` for a < n + max_size, b <= max_size + 1.
    binom: Vec<Vec<u64>>,
    offsets: Vec<usize>,
}

impl MultisetIndexer {
    pub fn new(n: usize, max_size: usize) -> Self {
        let rows = n + max_size + 1;
        let cols = max_size + 2;
        let mut binom = vec![vec![0u64; cols]; rows];
        for a in 0..rows {
            binom[a][0] = 1;
            for b in 1..cols.min(a + 1) {
                binom[a][b] = binom[a - 1][b - 1].saturating_add(if b < a { binom[a - 1][b] } else { 0 });
            }
        }
        let mut offsets = Vec::with_capacity(max_size + 2);
        let mut acc = 0usize;
        for r in 0..=max_size {
            offsets.push(acc);
            acc += multiset_count(n, r) as usize;
        }
        offsets.push(acc);
        MultisetIndexer { n, max_size, binom, offsets }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    /// Total number of multisets of size 0..=max_size.
    pub fn len(&self) -> usize {
        self.offsets[self.max_size + 1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn offset(&self, size: usize) -> usize {
        self.offsets[size]
    }

    /// Colex contribution of element `a` placed at position `j` of a sorted multiset.
    #[inline]
    pub fn step(&self, a: usize, j: usize) -> usize {
        self.binom[a + j][j + 1] as usize
    }

    pub fn rank(&self, sorted: &[u32]) -> usize {
        debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
        let mut r = self.offsets[sorted.len()];
        for (j, &a) in sorted.iter().enumerate() {
            r += self.step(a as usize, j);
        }
        r
    }

    /// Every multiset of the given size, in rank order.
    pub fn multisets(&self, size: usize) -> Vec<Vec<u32>> {
        let count = multiset_count(self.n, size) as usize;
        let mut out = vec![Vec::new(); count];
        for_each_multiset(self.n, size, |m| {
            let idx = self.rank(m) - self.offsets[size];
            out[idx] = m.to_vec();
        });
        out
    }
}

/// C(n + r - 1, r): number of size-r multisets over n symbols.
pub fn multiset_count(n: usize, r: usize) -> u128 {
    if r == 0 {
        return 1;
    }
    if n == 0 {
        return 0;
    }
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc * (n + i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Visit every sorted multiset of size `r` over `0..n` in lexicographic order.
pub fn for_each_multiset(n: usize, r: usize, mut f: impl FnMut(&[u32])) {
    if r == 0 {
        f(&[]);
        return;
    }
    if n == 0 {
        return;
    }
    let mut cur = vec![0u32; r];
    loop {
        f(&cur);
        let mut pos = r;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            if (cur[pos] as usize) < n - 1 {
                let v = cur[pos] + 1;
                for c in cur[pos..].iter_mut() {
                    *c = v;
                }
                break;
            }
        }
    }
}

/// Number of distinct orderings of a sorted multiset: r! / prod(mult!).
pub fn permutation_count(sorted: &[u32]) -> f64 {
    let mut acc = factorial(sorted.len());
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        acc /= factorial(j - i);
        i = j;
    }
    acc
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |a, i| a * i as f64)
}

/// Multiplicity vector (length `n`) of a sorted multiset.
pub fn counts(sorted: &[u32], n: usize) -> Vec<u32> {
    let mut c = vec![0u32; n];
    for &a in sorted {
        c[a as usize] += 1;
    }
    c
}

/// Inverse of [`counts`].
pub fn from_counts(counts: &[u32]) -> Vec<u32> {
    let mut out = Vec::new();
    for (i, &c) in counts.iter().enumerate() {
        for _ in 0..c {
            out.push(i as u32);
        }
    }
    out
}
