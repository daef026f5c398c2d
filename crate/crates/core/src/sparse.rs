//! Compressed sparse rows and banded direct solvers.
//!
//! Structured-grid finite element matrices have bandwidth `n + 1` under the
//! row-major node ordering, so banded LU (partial pivoting) and banded
//! Cholesky are the direct solvers used throughout.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// Square or rectangular matrix in CSR layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Accumulates `(row, col, value)` entries; duplicates are summed.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn build(self) -> SparseMatrix {
        // bucket by row, keeping insertion order so duplicates sum deterministically
        let mut start = vec![0usize; self.nrows + 1];
        for &(r, _, _) in &self.entries {
            start[r + 1] += 1;
        }
        for r in 0..self.nrows {
            start[r + 1] += start[r];
        }
        let mut next = start.clone();
        let mut bucket = vec![(0usize, 0.0f64); self.entries.len()];
        for &(r, c, v) in &self.entries {
            bucket[next[r]] = (c, v);
            next[r] += 1;
        }
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(bucket.len());
        let mut values: Vec<f64> = Vec::with_capacity(bucket.len());
        for r in 0..self.nrows {
            let seg = &mut bucket[start[r]..start[r + 1]];
            seg.sort_by_key(|&(c, _)| c);
            let mut last = usize::MAX;
            for &(c, v) in seg.iter() {
                if c == last {
                    *values.last_mut().expect("entry present") += v;
                } else {
                    last = c;
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr[r + 1] = col_idx.len();
        }
        SparseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

impl SparseMatrix {
    pub fn identity(n: usize) -> Self {
        let mut b = TripletBuilder::new(n, n);
        for i in 0..n {
            b.add(i, i, 1.0);
        }
        b.build()
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut b = TripletBuilder::new(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    b.add(i, j, m[(i, j)]);
                }
            }
        }
        b.build()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries of row `i` as `(col, value)` pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.ncols, "sparse mat-vec dimension");
        DVector::from_fn(self.nrows, |i, _| self.row(i).map(|(j, v)| v * x[j]).sum())
    }

    pub fn tr_mul_vec(&self, y: &DVector<f64>) -> DVector<f64> {
        assert_eq!(y.len(), self.nrows, "sparse transposed mat-vec dimension");
        let mut out = DVector::zeros(self.ncols);
        for i in 0..self.nrows {
            let yi = y[i];
            if yi != 0.0 {
                for (j, v) in self.row(i) {
                    out[j] += v * yi;
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut b = TripletBuilder::new(self.ncols, self.nrows);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                b.add(j, i, v);
            }
        }
        b.build()
    }

    /// `self + alpha * other`, same shape.
    pub fn add_scaled(&self, alpha: f64, other: &SparseMatrix) -> SparseMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut values = Vec::with_capacity(col_idx.capacity());
        for i in 0..self.nrows {
            let mut a = self.row(i).peekable();
            let mut b = other.row(i).map(|(j, v)| (j, alpha * v)).peekable();
            loop {
                let (j, v) = match (a.peek(), b.peek()) {
                    (Some(&(ja, va)), Some(&(jb, vb))) if ja == jb => {
                        a.next();
                        b.next();
                        (ja, va + vb)
                    }
                    (Some(&(ja, _)), Some(&(jb, _))) if jb < ja => b.next().expect("peeked"),
                    (Some(_), _) => a.next().expect("peeked"),
                    (None, Some(_)) => b.next().expect("peeked"),
                    (None, None) => break,
                };
                col_idx.push(j);
                values.push(v);
            }
            row_ptr[i + 1] = col_idx.len();
        }
        SparseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn scaled(&self, alpha: f64) -> SparseMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// Submatrix on the given row and column index lists.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> SparseMatrix {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            col_map[c] = k;
        }
        let mut b = TripletBuilder::new(rows.len(), cols.len());
        for (ri, &r) in rows.iter().enumerate() {
            for (c, v) in self.row(r) {
                let k = col_map[c];
                if k != usize::MAX {
                    b.add(ri, k, v);
                }
            }
        }
        b.build()
    }

    /// Lower and upper bandwidths `(kl, ku)`.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for i in 0..self.nrows {
            for (j, _) in self.row(i) {
                if i > j {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        (kl, ku)
    }
}

/// Banded LU factorization with partial pivoting (LAPACK `gbtf2` layout).
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandedLu {
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        check_dim(a.nrows(), a.ncols())?;
        let n = a.nrows();
        let (kl, ku) = a.bandwidths();
        let kv = kl + ku;
        let ldab = 2 * kl + ku + 1;
        let mut ab = vec![0.0; ldab * n];
        let idx = |r: usize, c: usize| c * ldab + r;
        for i in 0..n {
            for (j, v) in a.row(i) {
                ab[idx(kv + i - j, j)] += v;
            }
        }
        let mut ipiv = vec![0usize; n];
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = ab[idx(kv, j)].abs();
            for i in 1..=km {
                let v = ab[idx(kv + i, j)].abs();
                if v > best {
                    best = v;
                    jp = i;
                }
            }
            ipiv[j] = j + jp;
            if best == 0.0 {
                return Err(Error::SingularSystem {
                    context: "banded LU".into(),
                    row: j,
                });
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    ab.swap(idx(kv + j - c + jp, c), idx(kv + j - c, c));
                }
            }
            if km > 0 {
                let piv = ab[idx(kv, j)];
                for i in 1..=km {
                    ab[idx(kv + i, j)] /= piv;
                }
                for c in j + 1..=ju {
                    let u = ab[idx(kv + j - c, c)];
                    if u != 0.0 {
                        for i in 1..=km {
                            let l = ab[idx(kv + i, j)];
                            ab[idx(kv + j + i - c, c)] -= l * u;
                        }
                    }
                }
            }
        }
        Ok(Self {
            n,
            kl,
            ku,
            ldab,
            ab,
            ipiv,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.ab[c * self.ldab + r]
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        assert_eq!(b.len(), self.n);
        let (n, kl, kv) = (self.n, self.kl, self.kl + self.ku);
        let mut x = b.clone();
        for j in 0..n.saturating_sub(1) {
            let lm = kl.min(n - 1 - j);
            let l = self.ipiv[j];
            if l != j {
                x.swap_rows(l, j);
            }
            let xj = x[j];
            if xj != 0.0 {
                for i in 1..=lm {
                    x[j + i] -= self.at(kv + i, j) * xj;
                }
            }
        }
        for j in (0..n).rev() {
            x[j] /= self.at(kv, j);
            let xj = x[j];
            if xj != 0.0 {
                for i in j.saturating_sub(kv)..j {
                    x[i] -= self.at(kv + i - j, j) * xj;
                }
            }
        }
        x
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &DVector<f64>) -> DVector<f64> {
        assert_eq!(b.len(), self.n);
        let (n, kl, kv) = (self.n, self.kl, self.kl + self.ku);
        let mut x = b.clone();
        for j in 0..n {
            let mut s = x[j];
            for i in j.saturating_sub(kv)..j {
                s -= self.at(kv + i - j, j) * x[i];
            }
            x[j] = s / self.at(kv, j);
        }
        for j in (0..n.saturating_sub(1)).rev() {
            let lm = kl.min(n - 1 - j);
            let mut s = x[j];
            for i in 1..=lm {
                s -= self.at(kv + i, j) * x[j + i];
            }
            x[j] = s;
            let l = self.ipiv[j];
            if l != j {
                x.swap_rows(l, j);
            }
        }
        x
    }
}

/// Banded Cholesky factor `A = L Lᵀ` of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    kb: usize,
    // row i holds L[i, i-kb ..= i]
    l: Vec<f64>,
}

impl BandedCholesky {
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        check_dim(a.nrows(), a.ncols())?;
        let n = a.nrows();
        let (kl, ku) = a.bandwidths();
        let kb = kl.max(ku);
        let w = kb + 1;
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    l[i * w + (j + kb - i)] += v;
                }
            }
        }
        for i in 0..n {
            let lo = i.saturating_sub(kb);
            for j in lo..=i {
                let mut s = l[i * w + (j + kb - i)];
                let klo = lo.max(j.saturating_sub(kb));
                for k in klo..j {
                    s -= l[i * w + (k + kb - i)] * l[j * w + (k + kb - j)];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::SingularSystem {
                            context: "banded Cholesky (matrix not positive definite)".into(),
                            row: i,
                        });
                    }
                    l[i * w + kb] = s.sqrt();
                } else {
                    l[i * w + (j + kb - i)] = s / l[j * w + kb];
                }
            }
        }
        Ok(Self { n, kb, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.l[i * (self.kb + 1) + (j + self.kb - i)]
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut y = b.clone();
        for i in 0..self.n {
            let mut s = y[i];
            for k in i.saturating_sub(self.kb)..i {
                s -= self.at(i, k) * y[k];
            }
            y[i] = s / self.at(i, i);
        }
        y
    }

    /// Solves `Lᵀ x = b`.
    pub fn solve_upper(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        for i in (0..self.n).rev() {
            x[i] /= self.at(i, i);
            let xi = x[i];
            for k in i.saturating_sub(self.kb)..i {
                x[k] -= self.at(i, k) * xi;
            }
        }
        x
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `Lᵀ x`.
    pub fn mul_upper(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.n, |i, _| {
            (i..=(i + self.kb).min(self.n - 1))
                .map(|k| self.at(k, i) * x[k])
                .sum()
        })
    }

    /// `L x`.
    pub fn mul_lower(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.n, |i, _| {
            (i.saturating_sub(self.kb)..=i)
                .map(|k| self.at(i, k) * x[k])
                .sum()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_banded(n: usize, kl: usize, ku: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, n, |i, j| {
            if (i > j && i - j <= kl) || (j >= i && j - i <= ku) {
                rng.random_range(-1.0..1.0)
            } else {
                0.0
            }
        })
    }

    #[test]
    fn banded_lu_matches_dense_solve() {
        for (n, kl, ku, seed) in [(1, 0, 0, 1), (7, 2, 1, 2), (20, 3, 5, 3), (15, 14, 14, 4)] {
            let a = random_banded(n, kl, ku, seed);
            let sp = SparseMatrix::from_dense(&a);
            let lu = BandedLu::factor(&sp).unwrap();
            let b = DVector::from_fn(n, |i, _| (i as f64).sin() + 1.0);
            let x = lu.solve(&b);
            assert!((&a * &x - &b).norm() < 1e-9 * b.norm(), "n={n}");
            let xt = lu.solve_transpose(&b);
            assert!((a.transpose() * &xt - &b).norm() < 1e-9 * b.norm(), "n={n}");
        }
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 2.0]);
        let lu = BandedLu::factor(&SparseMatrix::from_dense(&a)).unwrap();
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!((&a * lu.solve(&b) - &b).norm() < 1e-12);
        assert!((a.transpose() * lu.solve_transpose(&b) - &b).norm() < 1e-12);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            BandedLu::factor(&SparseMatrix::from_dense(&a)),
            Err(Error::SingularSystem { .. })
        ));
    }

    #[test]
    fn cholesky_factor_reconstructs() {
        let b = random_banded(12, 2, 2, 9);
        let a = &b * b.transpose() + DMatrix::identity(12, 12);
        let ch = BandedCholesky::factor(&SparseMatrix::from_dense(&a)).unwrap();
        let x = DVector::from_fn(12, |i, _| i as f64 - 3.0);
        assert!((&a * ch.solve(&x) - &x).norm() < 1e-10);
        let lx = ch.mul_lower(&ch.solve_lower(&x));
        assert!((lx - &x).norm() < 1e-10);
    }
}
