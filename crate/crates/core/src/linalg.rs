//! Compressed sparse row operators with a fixed, deterministic layout, and
//! cell-wise assembly into them.

use std::sync::Arc;

use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparsityPattern {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl SparsityPattern {
    /// Builds a pattern from (row, col) pairs; duplicates are merged and
    /// columns are sorted within each row.
    pub fn from_pairs(nrows: usize, ncols: usize, mut pairs: Vec<(usize, usize)>) -> Self {
        pairs.sort_unstable();
        pairs.dedup();
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(pairs.len());
        for &(r, c) in &pairs {
            debug_assert!(r < nrows && c < ncols);
            row_ptr[r + 1] += 1;
            col_idx.push(c);
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    /// Index into the value array of entry (r, c), if structurally present.
    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        let start = self.row_ptr[r];
        self.row(r).binary_search(&c).ok().map(|k| start + k)
    }
}

/// A sparse matrix sharing its pattern with every operator assembled by the
/// same [`CellAssembler`].
#[derive(Clone, Debug)]
pub struct SparseOperator {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
}

impl SparseOperator {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self { pattern, values }
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn nrows(&self) -> usize {
        self.pattern.nrows
    }

    pub fn ncols(&self) -> usize {
        self.pattern.ncols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pattern.position(r, c).map_or(0.0, |k| self.values[k])
    }

    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.pattern.row_ptr[r]..self.pattern.row_ptr[r + 1];
        self.pattern.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols());
        (0..self.nrows())
            .map(|r| self.row_entries(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn transpose_matvec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.nrows());
        let mut out = vec![0.0; self.ncols()];
        for (r, &yr) in y.iter().enumerate() {
            for (c, v) in self.row_entries(r) {
                out[c] += v * yr;
            }
        }
        out
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.matvec(y))
    }

    /// `self += alpha * other`; both operators must share a pattern.
    pub fn axpy(&mut self, alpha: f64, other: &SparseOperator) {
        assert!(
            Arc::ptr_eq(&self.pattern, &other.pattern) || *self.pattern == *other.pattern,
            "axpy on operators with different sparsity"
        );
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            pattern: Arc::clone(&self.pattern),
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.nrows() {
            for (c, v) in self.row_entries(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols()]; self.nrows()];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row_entries(r) {
                row[c] += v;
            }
        }
        d
    }

    pub(crate) fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let triplets: Vec<Triplet<usize, usize, f64>> = (0..self.nrows())
            .flat_map(|r| self.row_entries(r).map(move |(c, v)| Triplet::new(r, c, v)))
            .collect();
        SparseColMat::try_new_from_triplets(self.nrows(), self.ncols(), &triplets)
            .map_err(|e| Error::LinearSolve(format!("{e:?}")))
    }
}

/// Precomputed scatter map from dense cell blocks into a global pattern.
#[derive(Clone, Debug)]
pub struct CellAssembler {
    pattern: Arc<SparsityPattern>,
    local_rows: usize,
    local_cols: usize,
    positions: Vec<usize>,
}

impl CellAssembler {
    /// `row_dofs(cell, buf)` / `col_dofs(cell, buf)` fill the global indices
    /// of a cell's local test and trial functions.
    pub fn new(
        nrows: usize,
        ncols: usize,
        ncells: usize,
        local_rows: usize,
        local_cols: usize,
        row_dofs: impl Fn(usize, &mut [usize]),
        col_dofs: impl Fn(usize, &mut [usize]),
    ) -> Self {
        let mut rbuf = vec![0; local_rows];
        let mut cbuf = vec![0; local_cols];
        let mut pairs = Vec::with_capacity(ncells * local_rows * local_cols);
        for c in 0..ncells {
            row_dofs(c, &mut rbuf);
            col_dofs(c, &mut cbuf);
            for &r in &rbuf {
                for &cc in &cbuf {
                    pairs.push((r, cc));
                }
            }
        }
        let pattern = Arc::new(SparsityPattern::from_pairs(nrows, ncols, pairs));
        let mut positions = Vec::with_capacity(ncells * local_rows * local_cols);
        for c in 0..ncells {
            row_dofs(c, &mut rbuf);
            col_dofs(c, &mut cbuf);
            for &r in &rbuf {
                for &cc in &cbuf {
                    positions.push(pattern.position(r, cc).expect("pair inserted above"));
                }
            }
        }
        Self {
            pattern,
            local_rows,
            local_cols,
            positions,
        }
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    /// Assembles by visiting cells in index order; `local(cell, block)`
    /// receives a zeroed row-major `local_rows x local_cols` block.
    pub fn assemble(&self, mut local: impl FnMut(usize, &mut [f64])) -> SparseOperator {
        let mut op = SparseOperator::zeros(Arc::clone(&self.pattern));
        let block_len = self.local_rows * self.local_cols;
        let mut block = vec![0.0; block_len];
        for (c, pos) in self.positions.chunks_exact(block_len).enumerate() {
            block.iter_mut().for_each(|b| *b = 0.0);
            local(c, &mut block);
            for (&p, &v) in pos.iter().zip(&block) {
                op.values[p] += v;
            }
        }
        op
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves a symmetric positive definite system by sparse Cholesky and
/// returns the solution with its relative residual.
pub fn solve_spd(a: &SparseOperator, b: &[f64]) -> Result<(Vec<f64>, f64)> {
    use faer::linalg::solvers::Solve;
    let n = a.nrows();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], 0.0));
    }
    let mat = a.to_faer()?;
    let llt = mat
        .sp_cholesky(faer::Side::Lower)
        .map_err(|e| Error::LinearSolve(format!("Cholesky failed: {e:?}")))?;
    let rhs = Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
    let sol = llt.solve(&rhs);
    let mut x: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();
    let mut res = relative_residual(a, &x, b);
    // One step of refinement recovers the last digits on stiff mass matrices.
    if res > 1e-14 {
        let r: Vec<f64> = b.iter().zip(a.matvec(&x)).map(|(bi, ax)| bi - ax).collect();
        let corr = llt.solve(&Mat::<f64>::from_fn(n, 1, |i, _| r[i]));
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += corr[(i, 0)];
        }
        res = relative_residual(a, &x, b);
    }
    Ok((x, res))
}

pub fn relative_residual(a: &SparseOperator, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let r: f64 = ax.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let bn = norm2(b);
    if bn == 0.0 {
        r
    } else {
        r / bn
    }
}
