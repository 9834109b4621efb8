//! Compressed sparse column storage and the symmetric wrapper used for
//! finite-element and precision matrices.

use std::fmt::Write as _;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// General sparse matrix in compressed sparse column form.
///
/// Row indices are strictly increasing within each column.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix<T> {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> CscMatrix<T> {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are
    /// summed; entries that end up exactly zero are dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        for &(i, j, _) in triplets {
            if i >= nrows || j >= ncols {
                return Err(Error::Dimension(format!(
                    "triplet ({i}, {j}) outside {nrows}x{ncols}"
                )));
            }
        }
        // counting sort by column, then sort rows inside each column
        let mut counts = vec![0usize; ncols + 1];
        for &(_, j, _) in triplets {
            counts[j + 1] += 1;
        }
        for j in 0..ncols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut rows = vec![0usize; triplets.len()];
        let mut vals = vec![T::zero(); triplets.len()];
        for &(i, j, v) in triplets {
            let p = next[j];
            rows[p] = i;
            vals[p] = v;
            next[j] += 1;
        }
        let mut col_ptr = Vec::with_capacity(ncols + 1);
        let mut row_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        col_ptr.push(0);
        let mut scratch: Vec<(usize, T)> = Vec::new();
        for j in 0..ncols {
            scratch.clear();
            scratch.extend((counts[j]..counts[j + 1]).map(|p| (rows[p], vals[p])));
            scratch.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < scratch.len() {
                let row = scratch[k].0;
                let mut acc = T::zero();
                while k < scratch.len() && scratch[k].0 == row {
                    acc += scratch[k].1;
                    k += 1;
                }
                if acc != T::zero() {
                    row_idx.push(row);
                    values.push(acc);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Ok(Self { nrows, ncols, col_ptr, row_idx, values })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![T::one(); n])
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let n = diag.len();
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        col_ptr.push(0);
        for (i, &d) in diag.iter().enumerate() {
            if d != T::zero() {
                row_idx.push(i);
                values.push(d);
            }
            col_ptr.push(row_idx.len());
        }
        Self { nrows: n, ncols: n, col_ptr, row_idx, values }
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

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Entries of column `j` as `(row, value)` pairs.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        match self.row_idx[r.clone()].binary_search(&i) {
            Ok(p) => self.values[r.start + p],
            Err(_) => T::zero(),
        }
    }

    /// Iterates over stored entries as `(row, col, value)` in column order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.ncols).flat_map(move |j| self.column(j).map(move |(i, v)| (i, j, v)))
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.nrows + 1];
        for &i in &self.row_idx {
            counts[i + 1] += 1;
        }
        for i in 0..self.nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut row_idx = vec![0usize; self.nnz()];
        let mut values = vec![T::zero(); self.nnz()];
        for j in 0..self.ncols {
            for (i, v) in self.column(j) {
                let p = next[i];
                row_idx[p] = j;
                values[p] = v;
                next[i] += 1;
            }
        }
        Self { nrows: self.ncols, ncols: self.nrows, col_ptr: counts, row_idx, values }
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.ncols, "mul_vec dimension");
        let mut y = vec![T::zero(); self.nrows];
        for (j, &xj) in x.iter().enumerate() {
            if xj == T::zero() {
                continue;
            }
            for (i, v) in self.column(j) {
                y[i] += v * xj;
            }
        }
        y
    }

    /// `y = Aᵀ x`
    pub fn tr_mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.nrows, "tr_mul_vec dimension");
        (0..self.ncols)
            .map(|j| self.column(j).map(|(i, v)| v * x[i]).sum())
            .collect()
    }

    /// Sparse product `A B`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.ncols != other.nrows {
            return Err(Error::Dimension(format!(
                "matmul {}x{} by {}x{}",
                self.nrows, self.ncols, other.nrows, other.ncols
            )));
        }
        let mut col_ptr = Vec::with_capacity(other.ncols + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        let mut work = vec![T::zero(); self.nrows];
        let mut mark = vec![usize::MAX; self.nrows];
        let mut pattern: Vec<usize> = Vec::new();
        col_ptr.push(0);
        for j in 0..other.ncols {
            pattern.clear();
            for (k, bkj) in other.column(j) {
                for (i, aik) in self.column(k) {
                    if mark[i] != j {
                        mark[i] = j;
                        pattern.push(i);
                        work[i] = T::zero();
                    }
                    work[i] += aik * bkj;
                }
            }
            pattern.sort_unstable();
            for &i in &pattern {
                if work[i] != T::zero() {
                    row_idx.push(i);
                    values.push(work[i]);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Ok(Self { nrows: self.nrows, ncols: other.ncols, col_ptr, row_idx, values })
    }

    /// `alpha A + beta B`
    pub fn linear_combination(&self, alpha: T, other: &Self, beta: T) -> Result<Self> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::Dimension("linear_combination shapes differ".into()));
        }
        let mut col_ptr = Vec::with_capacity(self.ncols + 1);
        let mut row_idx = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        col_ptr.push(0);
        for j in 0..self.ncols {
            let mut a = self.column(j).peekable();
            let mut b = other.column(j).peekable();
            loop {
                let (i, v) = match (a.peek(), b.peek()) {
                    (None, None) => break,
                    (Some(&(ia, va)), None) => {
                        a.next();
                        (ia, alpha * va)
                    }
                    (None, Some(&(ib, vb))) => {
                        b.next();
                        (ib, beta * vb)
                    }
                    (Some(&(ia, va)), Some(&(ib, vb))) => {
                        if ia < ib {
                            a.next();
                            (ia, alpha * va)
                        } else if ib < ia {
                            b.next();
                            (ib, beta * vb)
                        } else {
                            a.next();
                            b.next();
                            (ia, alpha * va + beta * vb)
                        }
                    }
                };
                if v != T::zero() {
                    row_idx.push(i);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Ok(Self { nrows: self.nrows, ncols: self.ncols, col_ptr, row_idx, values })
    }

    /// `diag(left) A diag(right)`
    pub fn scale_diag(&self, left: &[T], right: &[T]) -> Self {
        assert_eq!(left.len(), self.nrows);
        assert_eq!(right.len(), self.ncols);
        let mut out = self.clone();
        for j in 0..self.ncols {
            for p in out.col_ptr[j]..out.col_ptr[j + 1] {
                let i = out.row_idx[p];
                out.values[p] = left[i] * out.values[p] * right[j];
            }
        }
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.ncols]; self.nrows];
        for (i, j, v) in self.triplets() {
            d[i][j] = v;
        }
        d
    }
}

/// Symmetric sparse matrix storing each `(i <= j)` pair once, as the upper
/// triangle in compressed column form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric<T> {
    upper: CscMatrix<T>,
}

impl<T: Real> SparseSymmetric<T> {
    /// Builds from triplets; `(i, j)` with `i > j` is stored as `(j, i)`.
    /// Callers contribute each off-diagonal pair once.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        let t: Vec<_> = triplets
            .iter()
            .map(|&(i, j, v)| if i <= j { (i, j, v) } else { (j, i, v) })
            .collect();
        Ok(Self { upper: CscMatrix::from_triplets(n, n, &t)? })
    }

    /// Takes the upper triangle of a matrix assumed symmetric.
    pub fn from_full(full: &CscMatrix<T>) -> Result<Self> {
        if full.nrows() != full.ncols() {
            return Err(Error::Dimension("symmetric matrix must be square".into()));
        }
        let t: Vec<_> = full.triplets().filter(|&(i, j, _)| i <= j).collect();
        Ok(Self { upper: CscMatrix::from_triplets(full.nrows(), full.ncols(), &t)? })
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        Self { upper: CscMatrix::from_diagonal(diag) }
    }

    pub fn dim(&self) -> usize {
        self.upper.nrows()
    }

    /// Stored (upper-triangle) entry count.
    pub fn nnz(&self) -> usize {
        self.upper.nnz()
    }

    pub fn upper(&self) -> &CscMatrix<T> {
        &self.upper
    }

    /// Matrix with this pattern and new upper-triangle values (same order as
    /// [`SparseSymmetric::triplets`]). Exact zeros are compressed out.
    pub fn with_values(&self, values: Vec<T>) -> Result<Self> {
        if values.len() != self.nnz() {
            return Err(Error::Dimension(format!("{} values for {} stored entries", values.len(), self.nnz())));
        }
        if values.iter().any(|&v| v == T::zero()) {
            let t: Vec<_> = self.triplets().zip(&values).map(|((i, j, _), &v)| (i, j, v)).collect();
            return Self::from_triplets(self.dim(), &t);
        }
        let mut upper = self.upper.clone();
        upper.values = values;
        Ok(Self { upper })
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if i <= j {
            self.upper.get(i, j)
        } else {
            self.upper.get(j, i)
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.dim()).map(|i| self.upper.get(i, i)).collect()
    }

    /// Canonical `(i <= j, value)` triplets in column-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        self.upper.triplets()
    }

    /// Full (both triangles) storage.
    pub fn to_full(&self) -> CscMatrix<T> {
        let mut t: Vec<(usize, usize, T)> = Vec::with_capacity(2 * self.nnz());
        for (i, j, v) in self.upper.triplets() {
            t.push((i, j, v));
            if i != j {
                t.push((j, i, v));
            }
        }
        CscMatrix::from_triplets(self.dim(), self.dim(), &t).expect("indices in range")
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        self.to_full().to_dense()
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.dim(), "mul_vec dimension");
        let mut y = vec![T::zero(); self.dim()];
        for (i, j, v) in self.upper.triplets() {
            y[i] += v * x[j];
            if i != j {
                y[j] += v * x[i];
            }
        }
        y
    }

    /// `xᵀ A x`
    pub fn quad_form(&self, x: &[T]) -> T {
        let mut acc = T::zero();
        for (i, j, v) in self.upper.triplets() {
            let term = v * x[i] * x[j];
            acc += if i == j { term } else { term + term };
        }
        acc
    }

    pub fn scale(&self, c: T) -> Self {
        let mut out = self.clone();
        for v in out.upper.values.iter_mut() {
            *v *= c;
        }
        out
    }

    /// `D A D` for diagonal `D = diag(d)`.
    pub fn congruence_diag(&self, d: &[T]) -> Self {
        Self { upper: self.upper.scale_diag(d, d) }
    }

    /// `alpha A + beta B`
    pub fn linear_combination(&self, alpha: T, other: &Self, beta: T) -> Result<Self> {
        Ok(Self { upper: self.upper.linear_combination(alpha, &other.upper, beta)? })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.linear_combination(T::one(), other, T::one())
    }

    pub fn add_diagonal(&self, d: &[T]) -> Result<Self> {
        self.add(&Self::from_diagonal(d))
    }

    /// Block-diagonal embedding of `blocks` in order.
    pub fn block_diagonal(blocks: &[&Self]) -> Self {
        let n: usize = blocks.iter().map(|b| b.dim()).sum();
        let mut t = Vec::with_capacity(blocks.iter().map(|b| b.nnz()).sum());
        let mut offset = 0;
        for b in blocks {
            t.extend(b.triplets().map(|(i, j, v)| (i + offset, j + offset, v)));
            offset += b.dim();
        }
        Self::from_triplets(n, &t).expect("block indices in range")
    }

    /// Writes `i,j,value` rows (upper triangle) with a header.
    pub fn write_triplet_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut s = String::from("i,j,value\n");
        for (i, j, v) in self.triplets() {
            writeln!(s, "{i},{j},{v}").expect("string write");
        }
        w.write_all(s.as_bytes())?;
        Ok(())
    }

    /// Reads the format produced by [`SparseSymmetric::write_triplet_csv`].
    pub fn read_triplet_csv<R: Read>(n: usize, r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut t = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |k: usize| -> Result<&str> {
                rec.get(k).ok_or_else(|| Error::Parse(format!("missing column {k}")))
            };
            let i: usize = parse(0)?.trim().parse().map_err(|e| Error::Parse(format!("{e}")))?;
            let j: usize = parse(1)?.trim().parse().map_err(|e| Error::Parse(format!("{e}")))?;
            let v: f64 = parse(2)?.trim().parse().map_err(|e| Error::Parse(format!("{e}")))?;
            t.push((i, j, T::lit(v)));
        }
        Self::from_triplets(n, &t)
    }
}
