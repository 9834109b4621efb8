//! Sparse Cholesky factorization `P A Pᵀ = L Lᵀ` (up-looking, elimination
//! tree driven), with log-determinants, solves and selected inversion.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sparse::SparseSymmetric;

/// Symmetric permutation. `perm[new] = old`, `inv[old] = new`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ordering {
    perm: Vec<usize>,
    inv: Vec<usize>,
}

impl Ordering {
    pub fn identity(n: usize) -> Self {
        Self { perm: (0..n).collect(), inv: (0..n).collect() }
    }

    pub fn from_perm(perm: Vec<usize>) -> Result<Self> {
        let n = perm.len();
        let mut inv = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            if old >= n || inv[old] != usize::MAX {
                return Err(Error::Argument("ordering is not a permutation".into()));
            }
            inv[old] = new;
        }
        Ok(Self { perm, inv })
    }

    /// Reverse Cuthill-McKee on the sparsity graph, with high-degree
    /// vertices (global fixed effects) moved to the end so they do not fill.
    pub fn reverse_cuthill_mckee<T: Real>(a: &SparseSymmetric<T>) -> Self {
        let n = a.dim();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, j, _) in a.triplets() {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        let dense_cut = 16usize.max((10.0 * (n as f64).sqrt()) as usize);
        let dense: Vec<bool> = adj.iter().map(|l| l.len() > dense_cut).collect();
        for list in adj.iter_mut() {
            list.retain(|&k| !dense[k]);
            list.sort_unstable();
            list.dedup();
        }
        let degree: Vec<usize> = adj.iter().map(Vec::len).collect();

        let mut visited = dense.clone();
        let mut order = Vec::with_capacity(n);
        let mut remaining: Vec<usize> = (0..n).filter(|&k| !dense[k]).collect();
        remaining.sort_by_key(|&k| degree[k]);
        for &seed in &remaining {
            if visited[seed] {
                continue;
            }
            let start = pseudo_peripheral(seed, &adj, &visited);
            let mut queue = VecDeque::from([start]);
            visited[start] = true;
            let mut component = Vec::new();
            while let Some(v) = queue.pop_front() {
                component.push(v);
                let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
                nbrs.sort_by_key(|&w| (degree[w], w));
                for w in nbrs {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
            order.extend(component);
        }
        order.reverse();
        order.extend((0..n).filter(|&k| dense[k]));
        Self::from_perm(order).expect("rcm yields a permutation")
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn inv(&self) -> &[usize] {
        &self.inv
    }
}

fn pseudo_peripheral(seed: usize, adj: &[Vec<usize>], blocked: &[bool]) -> usize {
    let mut root = seed;
    let mut best_depth = 0;
    for _ in 0..8 {
        let (far, depth) = bfs_farthest(root, adj, blocked);
        if depth <= best_depth {
            break;
        }
        best_depth = depth;
        root = far;
    }
    root
}

fn bfs_farthest(root: usize, adj: &[Vec<usize>], blocked: &[bool]) -> (usize, usize) {
    let mut level = vec![usize::MAX; adj.len()];
    level[root] = 0;
    let mut queue = VecDeque::from([root]);
    let mut far = (root, 0);
    while let Some(v) = queue.pop_front() {
        let l = level[v];
        if l > far.1 || (l == far.1 && adj[v].len() < adj[far.0].len()) {
            far = (v, l);
        }
        for &w in &adj[v] {
            if !blocked[w] && level[w] == usize::MAX {
                level[w] = l + 1;
                queue.push_back(w);
            }
        }
    }
    far
}

/// Ordering, elimination tree and the nonzero pattern of `L` for one
/// sparsity pattern; reused by every numeric factorization on that pattern.
#[derive(Debug, Clone)]
pub struct SymbolicCholesky {
    n: usize,
    nnz_input: usize,
    ordering: Ordering,
    /// permuted upper triangle: per column, (row, index into input values)
    cols: Vec<Vec<(usize, usize)>>,
    /// row patterns of `L` below the diagonal, ascending
    row_ptr: Vec<usize>,
    row_pattern: Vec<usize>,
    col_ptr: Vec<usize>,
}

impl SymbolicCholesky {
    /// Analyzes the stored pattern of `a` under `ordering`.
    pub fn analyze<T: Real>(a: &SparseSymmetric<T>, ordering: Ordering) -> Result<Self> {
        let n = a.dim();
        if ordering.len() != n {
            return Err(Error::Dimension(format!("ordering of length {} for dimension {n}", ordering.len())));
        }
        let inv = ordering.inv();
        let mut cols: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (src, (i, j, _)) in a.triplets().enumerate() {
            let (pi, pj) = (inv[i], inv[j]);
            let (r, c) = if pi <= pj { (pi, pj) } else { (pj, pi) };
            cols[c].push((r, src));
        }
        let parent = etree(&cols, n);

        let mut counts = vec![1usize; n];
        let mut mark = vec![usize::MAX; n];
        let mut stack = Vec::new();
        let mut pattern = Vec::new();
        let mut row_ptr = vec![0usize; n + 1];
        let mut row_pattern = Vec::new();
        for (k, col) in cols.iter().enumerate() {
            ereach(col, k, &parent, &mut mark, &mut stack, &mut pattern);
            for &i in &pattern {
                counts[i] += 1;
            }
            row_pattern.extend_from_slice(&pattern);
            row_ptr[k + 1] = row_pattern.len();
        }
        let mut col_ptr = vec![0usize; n + 1];
        for j in 0..n {
            col_ptr[j + 1] = col_ptr[j] + counts[j];
        }
        Ok(Self { n, nnz_input: a.nnz(), ordering, cols, row_ptr, row_pattern, col_ptr })
    }

    /// Analyzes with a reverse Cuthill-McKee ordering.
    pub fn analyze_rcm<T: Real>(a: &SparseSymmetric<T>) -> Result<Self> {
        Self::analyze(a, Ordering::reverse_cuthill_mckee(a))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn ordering(&self) -> &Ordering {
        &self.ordering
    }

    /// Entries of `L`, diagonal included.
    pub fn nnz_factor(&self) -> usize {
        self.col_ptr[self.n]
    }

    /// Numeric factorization for values laid out like the analyzed
    /// matrix's stored entries (explicit zeros allowed).
    pub fn factorize<T: Real>(self: &Arc<Self>, values: &[T]) -> Result<CholeskyFactor<T>> {
        if values.len() != self.nnz_input {
            return Err(Error::Dimension(format!("{} values for a pattern of {} entries", values.len(), self.nnz_input)));
        }
        let n = self.n;
        let col_ptr = &self.col_ptr;
        let nnz = col_ptr[n];
        let mut row_idx = vec![0usize; nnz];
        let mut lv = vec![T::zero(); nnz];
        let mut fill: Vec<usize> = col_ptr[..n].to_vec();
        let mut x = vec![T::zero(); n];

        for k in 0..n {
            for &(r, src) in &self.cols[k] {
                x[r] += values[src];
            }
            let mut d = x[k];
            x[k] = T::zero();
            for &i in &self.row_pattern[self.row_ptr[k]..self.row_ptr[k + 1]] {
                let lki = x[i] / lv[col_ptr[i]];
                x[i] = T::zero();
                for p in col_ptr[i] + 1..fill[i] {
                    x[row_idx[p]] -= lv[p] * lki;
                }
                d -= lki * lki;
                let p = fill[i];
                row_idx[p] = k;
                lv[p] = lki;
                fill[i] += 1;
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: self.ordering.perm()[k], context: String::new() });
            }
            let p = fill[k];
            row_idx[p] = k;
            lv[p] = d.sqrt();
            fill[k] += 1;
        }
        Ok(CholeskyFactor { n, symbolic: Arc::clone(self), row_idx, values: lv })
    }
}

/// Lower-triangular factor in compressed column form; the diagonal entry is
/// the first entry of each column.
#[derive(Debug, Clone)]
pub struct CholeskyFactor<T> {
    n: usize,
    symbolic: Arc<SymbolicCholesky>,
    row_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> CholeskyFactor<T> {
    /// Factorizes with a reverse Cuthill-McKee ordering.
    pub fn new(a: &SparseSymmetric<T>) -> Result<Self> {
        let ord = Ordering::reverse_cuthill_mckee(a);
        Self::with_ordering(a, ord)
    }

    /// Factorizes `P A Pᵀ` for a caller-supplied ordering.
    pub fn with_ordering(a: &SparseSymmetric<T>, ordering: Ordering) -> Result<Self> {
        Arc::new(SymbolicCholesky::analyze(a, ordering)?).factorize(a.upper().values())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn ordering(&self) -> &Ordering {
        &self.symbolic.ordering
    }

    /// Stored entries of `L`.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `log |A|`
    pub fn log_det(&self) -> T {
        let two = T::lit(2.0);
        (0..self.n).map(|j| two * self.values[self.symbolic.col_ptr[j]].ln()).sum()
    }

    /// In-place `L y = b` on permuted coordinates.
    fn forward(&self, y: &mut [T]) {
        for j in 0..self.n {
            let p0 = self.symbolic.col_ptr[j];
            y[j] /= self.values[p0];
            let yj = y[j];
            for p in p0 + 1..self.symbolic.col_ptr[j + 1] {
                y[self.row_idx[p]] -= self.values[p] * yj;
            }
        }
    }

    /// In-place `Lᵀ y = b` on permuted coordinates.
    fn backward(&self, y: &mut [T]) {
        for j in (0..self.n).rev() {
            let p0 = self.symbolic.col_ptr[j];
            let mut acc = y[j];
            for p in p0 + 1..self.symbolic.col_ptr[j + 1] {
                acc -= self.values[p] * y[self.row_idx[p]];
            }
            y[j] = acc / self.values[p0];
        }
    }

    fn permute(&self, b: &[T]) -> Vec<T> {
        self.symbolic.ordering.perm().iter().map(|&old| b[old]).collect()
    }

    fn unpermute(&self, y: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n];
        for (new, &old) in self.symbolic.ordering.perm().iter().enumerate() {
            out[old] = y[new];
        }
        out
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        assert_eq!(b.len(), self.n, "solve dimension");
        let mut y = self.permute(b);
        self.forward(&mut y);
        self.backward(&mut y);
        self.unpermute(&y)
    }

    /// `x = Pᵀ L⁻ᵀ z`; for `z ~ N(0, I)` this has covariance `A⁻¹`.
    pub fn solve_lt(&self, z: &[T]) -> Vec<T> {
        assert_eq!(z.len(), self.n, "solve_lt dimension");
        let mut y = z.to_vec();
        self.backward(&mut y);
        self.unpermute(&y)
    }

    /// `‖L⁻¹ P b‖²`, the variance of `bᵀx` when `x` has precision `A`.
    pub fn inverse_quad_form(&self, b: &[T]) -> T {
        let mut y = self.permute(b);
        self.forward(&mut y);
        y.iter().map(|&v| v * v).sum()
    }

    /// Entries of `A⁻¹` on the sparsity pattern of `L` (Takahashi recursion).
    pub fn selected_inverse(&self) -> SelectedInverse<T> {
        let n = self.n;
        let mut sigma = vec![T::zero(); self.nnz()];
        for j in (0..n).rev() {
            let p0 = self.symbolic.col_ptr[j];
            let p1 = self.symbolic.col_ptr[j + 1];
            let ljj = self.values[p0];
            // off-diagonal entries, row i in struct(L[:, j])
            for p in p0 + 1..p1 {
                let i = self.row_idx[p];
                let mut acc = T::zero();
                for q in p0 + 1..p1 {
                    let k = self.row_idx[q];
                    let s_ik = if k >= i {
                        self.lookup(&sigma, k, i)
                    } else {
                        self.lookup(&sigma, i, k)
                    };
                    acc += self.values[q] * s_ik;
                }
                sigma[p] = -acc / ljj;
            }
            let mut acc = T::zero();
            for p in p0 + 1..p1 {
                acc += self.values[p] * sigma[p];
            }
            sigma[p0] = (T::one() / ljj - acc) / ljj;
        }
        SelectedInverse { symbolic: Arc::clone(&self.symbolic), rows: self.row_idx.clone(), sigma }
    }

    /// Looks up the already computed `Σ[r, c]` with `r >= c` (permuted).
    fn lookup(&self, sigma: &[T], r: usize, c: usize) -> T {
        let range = self.symbolic.col_ptr[c]..self.symbolic.col_ptr[c + 1];
        match self.row_idx[range.clone()].binary_search(&r) {
            Ok(k) => sigma[range.start + k],
            Err(_) => T::zero(),
        }
    }
}

/// Partial inverse restricted to the factor's pattern.
#[derive(Debug, Clone)]
pub struct SelectedInverse<T> {
    symbolic: Arc<SymbolicCholesky>,
    rows: Vec<usize>,
    sigma: Vec<T>,
}

impl<T: Real> SelectedInverse<T> {
    /// Diagonal of `A⁻¹` in original ordering.
    pub fn diagonal(&self) -> Vec<T> {
        let n = self.symbolic.n;
        let mut d = vec![T::zero(); n];
        for (new, &old) in self.symbolic.ordering.perm().iter().enumerate() {
            d[old] = self.sigma[self.symbolic.col_ptr[new]];
        }
        d
    }

    /// `A⁻¹[i, j]` if it lies on the computed pattern.
    pub fn get(&self, i: usize, j: usize) -> Option<T> {
        let inv = self.symbolic.ordering.inv();
        let (pi, pj) = (inv[i], inv[j]);
        let (r, c) = if pi >= pj { (pi, pj) } else { (pj, pi) };
        let range = self.symbolic.col_ptr[c]..self.symbolic.col_ptr[c + 1];
        self.rows[range.clone()].binary_search(&r).ok().map(|k| self.sigma[range.start + k])
    }
}

fn etree<V>(cols: &[Vec<(usize, V)>], n: usize) -> Vec<usize> {
    let mut parent = vec![usize::MAX; n];
    let mut ancestor = vec![usize::MAX; n];
    for (k, col) in cols.iter().enumerate() {
        for &(r, _) in col {
            let mut i = r;
            while i != usize::MAX && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == usize::MAX {
                    parent[i] = k;
                    break;
                }
                i = next;
            }
        }
    }
    parent
}

/// Nonzero pattern of row `k` of `L` (excluding the diagonal) in
/// topological order, written into `out`.
fn ereach<V>(
    col: &[(usize, V)],
    k: usize,
    parent: &[usize],
    mark: &mut [usize],
    stack: &mut Vec<usize>,
    out: &mut Vec<usize>,
) {
    out.clear();
    mark[k] = k;
    for &(r, _) in col {
        if r > k {
            continue;
        }
        stack.clear();
        let mut i = r;
        while mark[i] != k {
            stack.push(i);
            mark[i] = k;
            i = parent[i];
            if i == usize::MAX {
                break;
            }
        }
        out.append(stack);
    }
    // ascending order is a valid elimination order for the forward solve
    out.sort_unstable();
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize, shift: f64) -> SparseSymmetric<f64> {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + shift));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        SparseSymmetric::from_triplets(n, &t).unwrap()
    }

    fn arrow(n: usize) -> SparseSymmetric<f64> {
        // tridiagonal plus a dense first row/column
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0 + n as f64));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
            if i > 1 {
                t.push((0, i, 0.5));
            }
        }
        SparseSymmetric::from_triplets(n, &t).unwrap()
    }

    fn dense_inverse(a: &SparseSymmetric<f64>) -> nalgebra::DMatrix<f64> {
        let d = a.to_dense();
        let n = d.len();
        nalgebra::DMatrix::from_fn(n, n, |i, j| d[i][j]).try_inverse().unwrap()
    }

    #[test]
    fn solve_matches_product() {
        let a = arrow(40);
        let f = CholeskyFactor::new(&a).unwrap();
        let b: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let x = f.solve(&b);
        let r = a.mul_vec(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn log_det_matches_dense() {
        let a = laplacian_1d(30, 0.3);
        let f = CholeskyFactor::new(&a).unwrap();
        let d = a.to_dense();
        let m = nalgebra::DMatrix::from_fn(30, 30, |i, j| d[i][j]);
        assert!((f.log_det() - m.determinant().ln()).abs() < 1e-10);
    }

    #[test]
    fn selected_inverse_matches_dense_on_pattern() {
        for a in [arrow(25), laplacian_1d(20, 0.1)] {
            let f = CholeskyFactor::new(&a).unwrap();
            let s = f.selected_inverse();
            let inv = dense_inverse(&a);
            let diag = s.diagonal();
            for i in 0..a.dim() {
                assert!((diag[i] - inv[(i, i)]).abs() < 1e-12);
                for j in 0..a.dim() {
                    if let Some(v) = s.get(i, j) {
                        assert!((v - inv[(i, j)]).abs() < 1e-12, "({i},{j})");
                    }
                }
            }
            // the original pattern is always covered
            for (i, j, _) in a.triplets() {
                assert!(s.get(i, j).is_some());
            }
        }
    }

    #[test]
    fn indefinite_matrix_reports_pivot() {
        let a = SparseSymmetric::from_triplets(2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 1, 1.0)]).unwrap();
        assert!(matches!(CholeskyFactor::new(&a), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn dense_vertices_go_last() {
        let a = arrow(200);
        let ord = Ordering::reverse_cuthill_mckee(&a);
        assert_eq!(*ord.perm().last().unwrap(), 0);
        let f = CholeskyFactor::with_ordering(&a, ord).unwrap();
        // arrow ordered last gives no fill beyond tridiagonal + last row
        assert!(f.nnz() <= 3 * 200);
    }

    #[test]
    fn inverse_quad_form_matches_solve() {
        let a = arrow(15);
        let f = CholeskyFactor::new(&a).unwrap();
        let b: Vec<f64> = (0..15).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let x = f.solve(&b);
        let expect: f64 = b.iter().zip(&x).map(|(p, q)| p * q).sum();
        assert!((f.inverse_quad_form(&b) - expect).abs() < 1e-13);
    }

    #[test]
    fn works_in_single_precision() {
        let a = SparseSymmetric::<f32>::from_triplets(3, &[(0, 0, 4.0), (0, 1, 1.0), (1, 1, 3.0), (2, 2, 2.0)]).unwrap();
        let f = CholeskyFactor::new(&a).unwrap();
        let x = f.solve(&[1.0, 2.0, 3.0]);
        let r = a.mul_vec(&x);
        assert!((r[0] - 1.0).abs() < 1e-5 && (r[1] - 2.0).abs() < 1e-5 && (r[2] - 3.0).abs() < 1e-5);
    }
}
