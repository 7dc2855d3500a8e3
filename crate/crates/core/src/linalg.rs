//! Thin wrappers over faer for the factorizations used by the solver.

use std::collections::HashMap;
use std::sync::Mutex;

use faer::linalg::solvers::Solve;
use faer::prelude::*;
use faer::sparse::linalg::solvers::{Llt as SpLlt, Lu as SpLu, SymbolicLlt};
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::Side;

use crate::error::{Error, Result};

pub type SparseMat = SparseColMat<usize, f64>;

/// Accumulates `(row, col, value)` entries; duplicates are summed in a fixed
/// order so the result does not depend on insertion order.
#[derive(Clone, Debug, Default)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, entries: Vec::new() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self { nrows, ncols, entries: Vec::with_capacity(cap) }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn build(self) -> SparseMat {
        // Bucket by column, then stable-sort each column by row, so duplicates
        // are summed in insertion order, which callers make deterministic.
        let mut start = vec![0usize; self.ncols + 1];
        for &(_, c, _) in &self.entries {
            start[c + 1] += 1;
        }
        for c in 0..self.ncols {
            start[c + 1] += start[c];
        }
        let mut next = start.clone();
        let mut bucketed = vec![(0usize, 0.0f64); self.entries.len()];
        for &(r, c, v) in &self.entries {
            bucketed[next[c]] = (r, v);
            next[c] += 1;
        }
        let mut col_ptr = vec![0usize; self.ncols + 1];
        let mut row_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        for c in 0..self.ncols {
            let col = &mut bucketed[start[c]..start[c + 1]];
            col.sort_by_key(|e| e.0);
            let mut last = None;
            for &(r, v) in col.iter() {
                if last == Some(r) {
                    *values.last_mut().unwrap() += v;
                } else {
                    row_idx.push(r);
                    values.push(v);
                    last = Some(r);
                }
            }
            col_ptr[c + 1] = row_idx.len();
        }
        let symbolic = SymbolicSparseColMat::new_checked(self.nrows, self.ncols, col_ptr, None, row_idx);
        SparseColMat::new(symbolic, values)
    }
}

/// `y = A x` for a column-major sparse matrix.
pub fn sparse_matvec(a: &SparseMat, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.nrows()];
    let sym = a.symbolic();
    let vals = a.val();
    for c in 0..a.ncols() {
        let xc = x[c];
        if xc == 0.0 {
            continue;
        }
        for p in sym.col_ptr()[c]..sym.col_ptr()[c + 1] {
            y[sym.row_idx()[p]] += vals[p] * xc;
        }
    }
    y
}

/// Sparse Cholesky factorization of a symmetric positive definite matrix.
pub struct SpdSolver {
    llt: SpLlt<usize, f64>,
    n: usize,
}

impl SpdSolver {
    pub fn new(a: &SparseMat) -> Result<Self> {
        Self::with_symbolic(Self::symbolic(a)?, a)
    }

    /// Factorize reusing a symbolic analysis of a matrix with the same pattern.
    pub fn with_symbolic(symbolic: SymbolicLlt<usize>, a: &SparseMat) -> Result<Self> {
        let llt = SpLlt::try_new_with_symbolic(symbolic, a.as_ref(), Side::Lower)
            .map_err(|e| Error::SolverFailure(format!("matrix is not positive definite: {e:?}")))?;
        Ok(Self { llt, n: a.nrows() })
    }

    pub fn symbolic(a: &SparseMat) -> Result<SymbolicLlt<usize>> {
        SymbolicLlt::try_new(a.symbolic(), Side::Lower)
            .map_err(|e| Error::SolverFailure(format!("symbolic Cholesky failed: {e:?}")))
    }

    /// Like [`SpdSolver::new`], reusing the analysis of an earlier matrix
    /// with the same pattern from `cache`.
    pub fn cached(cache: &SymbolicCache, a: &SparseMat) -> Result<Self> {
        let key = (a.symbolic().col_ptr().to_vec(), a.symbolic().row_idx().to_vec());
        let hit = cache.map.lock().expect("symbolic cache poisoned").get(&key).cloned();
        let symbolic = match hit {
            Some(s) => s,
            None => {
                let s = Self::symbolic(a)?;
                cache.map.lock().expect("symbolic cache poisoned").insert(key, s.clone());
                s
            }
        };
        Self::with_symbolic(symbolic, a)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut m = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        self.llt.solve_in_place(m.as_mut());
        (0..b.len()).map(|i| m[(i, 0)]).collect()
    }

    pub fn solve_in_place(&self, rhs: &mut Mat<f64>) {
        self.llt.solve_in_place(rhs.as_mut());
    }
}

/// Symbolic Cholesky analyses keyed by sparsity pattern. Patches of equal
/// shape share one analysis; the analysis is deterministic, so reuse does not
/// change any result.
#[derive(Default)]
pub struct SymbolicCache {
    map: Mutex<HashMap<(Vec<usize>, Vec<usize>), SymbolicLlt<usize>>>,
}

impl std::fmt::Debug for SymbolicCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let n = self.map.lock().map(|m| m.len()).unwrap_or(0);
        write!(f, "SymbolicCache({n} patterns)")
    }
}

impl Clone for SymbolicCache {
    fn clone(&self) -> Self {
        Self::default()
    }
}

/// Sparse LU with partial pivoting for general square systems.
pub struct LuSolver {
    lu: SpLu<usize, f64>,
}

impl LuSolver {
    pub fn new(a: &SparseMat) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::SolverFailure("LU of a non-square matrix".into()));
        }
        let lu = a
            .sp_lu()
            .map_err(|e| Error::SolverFailure(format!("sparse LU failed: {e:?}")))?;
        Ok(Self { lu })
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut m = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        self.lu.solve_in_place(m.as_mut());
        (0..b.len()).map(|i| m[(i, 0)]).collect()
    }
}

/// Solve a small dense symmetric positive definite system.
pub fn dense_spd_solve(a: &Mat<f64>, b: &mut Mat<f64>) -> Result<()> {
    let llt = a
        .llt(Side::Lower)
        .map_err(|e| Error::Numeric(format!("dense matrix is not positive definite: {e:?}")))?;
    llt.solve_in_place(b.as_mut());
    Ok(())
}

/// Largest eigenpair of the symmetric-definite pencil `B x = mu C x`, both
/// given as dense row-major `n x n` arrays. The eigenvector is C-normalized.
pub fn gevp_max(b: &[f64], c: &[f64], n: usize) -> Result<(f64, Vec<f64>)> {
    if n == 0 {
        return Ok((0.0, Vec::new()));
    }
    let cm = Mat::from_fn(n, n, |i, j| c[i * n + j]);
    let llt = cm.llt(Side::Lower).map_err(|e| {
        Error::Numeric(format!("indicator denominator matrix is not positive definite ({e:?}): {c:?}"))
    })?;
    let l = llt.L();
    // M = L^{-1} B L^{-T}
    let mut w = Mat::from_fn(n, n, |i, j| b[i * n + j]);
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, w.as_mut(), Par::Seq);
    let mut wt = w.transpose().to_owned();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, wt.as_mut(), Par::Seq);
    let m = Mat::from_fn(n, n, |i, j| 0.5 * (wt[(i, j)] + wt[(j, i)]));
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numeric(format!("symmetric eigensolver failed: {e:?}")))?;
    let mu = evd.S().column_vector()[n - 1];
    let mut y = Mat::from_fn(n, 1, |i, _| evd.U()[(i, n - 1)]);
    faer::linalg::triangular_solve::solve_upper_triangular_in_place(l.transpose(), y.as_mut(), Par::Seq);
    Ok((mu.max(0.0), (0..n).map(|i| y[(i, 0)]).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let mut t = TripletBuilder::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(1, 0, 2.0);
        t.push(0, 0, 3.0);
        t.push(1, 1, 5.0);
        let a = t.build();
        assert_eq!(sparse_matvec(&a, &[1.0, 0.0]), vec![4.0, 2.0]);
        assert_eq!(sparse_matvec(&a, &[0.0, 1.0]), vec![0.0, 5.0]);
    }

    #[test]
    fn spd_and_lu_solve() {
        let mut t = TripletBuilder::new(3, 3);
        for (r, c, v) in [(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0), (1, 2, -1.0), (2, 1, -1.0), (2, 2, 2.0)] {
            t.push(r, c, v);
        }
        let a = t.build();
        let x = SpdSolver::new(&a).unwrap().solve_vec(&[1.0, 0.0, 1.0]);
        for v in &x {
            assert!((v - 1.0).abs() < 1e-14);
        }
        let x = LuSolver::new(&a).unwrap().solve_vec(&[1.0, 0.0, 1.0]);
        for v in &x {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn multi_rhs_solve_matches_single_columns() {
        // 2D five-point Laplacian plus a varying diagonal
        let m = 12;
        let n = m * m;
        let mut t = TripletBuilder::new(n, n);
        for i in 0..m {
            for j in 0..m {
                let r = i * m + j;
                t.push(r, r, 4.0 + (r % 7) as f64 * 0.1);
                if i > 0 {
                    t.push(r, r - m, -1.0);
                }
                if i + 1 < m {
                    t.push(r, r + m, -1.0);
                }
                if j > 0 {
                    t.push(r, r - 1, -1.0);
                }
                if j + 1 < m {
                    t.push(r, r + 1, -1.0);
                }
            }
        }
        let a = t.build();
        let s = SpdSolver::new(&a).unwrap();
        let b = Mat::<f64>::from_fn(n, 5, |i, c| ((i * 31 + c * 17) % 11) as f64 - 5.0);
        let mut x = b.clone();
        s.solve_in_place(&mut x);
        for c in 0..5 {
            let col: Vec<f64> = (0..n).map(|i| b[(i, c)]).collect();
            let single = s.solve_vec(&col);
            let r = sparse_matvec(&a, &single);
            for i in 0..n {
                assert!((x[(i, c)] - single[i]).abs() <= 1e-12 * (1.0 + single[i].abs()));
                assert!((r[i] - col[i]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn indefinite_rejected() {
        let mut t = TripletBuilder::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(1, 1, -1.0);
        assert!(SpdSolver::new(&t.build()).is_err());
    }

    #[test]
    fn gevp_diagonal() {
        let b = [2.0, 0.0, 0.0, 9.0];
        let c = [1.0, 0.0, 0.0, 3.0];
        let (mu, x) = gevp_max(&b, &c, 2).unwrap();
        assert!((mu - 3.0).abs() < 1e-14);
        assert!(x[0].abs() < 1e-14);
        assert!((3.0 * x[1] * x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn gevp_matches_brute_force_rayleigh() {
        let b = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0];
        let c = [2.0, 0.3, 0.1, 0.3, 1.5, 0.0, 0.1, 0.0, 1.0];
        let (mu, x) = gevp_max(&b, &c, 3).unwrap();
        let quad = |m: &[f64], v: &[f64]| {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += v[i] * m[i * 3 + j] * v[j];
                }
            }
            s
        };
        assert!((quad(&b, &x) / quad(&c, &x) - mu).abs() < 1e-12);
        let mut best: f64 = 0.0;
        for i in 0..60 {
            for j in 0..60 {
                let th = std::f64::consts::PI * i as f64 / 60.0;
                let ph = 2.0 * std::f64::consts::PI * j as f64 / 60.0;
                let v = [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
                best = best.max(quad(&b, &v) / quad(&c, &v));
            }
        }
        assert!(best <= mu * (1.0 + 1e-12));
        assert!(best > 0.99 * mu);
    }
}
