//! Compressed sparse row matrices, coefficient vectors, and the direct
//! sparse solver used for all linear systems.
//!
//! The factorization is computed once per matrix and can be reused across
//! the nonlinear fixed-point loop; repeated solves with the same right-hand
//! side are bitwise identical (the backend is forced to sequential
//! execution).

use crate::{Error, Result};
use faer::prelude::Solve;
use faer::sparse::{SparseColMat, Triplet};

/// Sparse matrix in compressed sparse row form with sorted, unique column
/// indices per row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Assemble from triplets; duplicate entries are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_rows];
        for &(r, c, v) in triplets {
            assert!(r < n_rows && c < n_cols, "triplet ({r}, {c}) out of bounds");
            per_row[r].push((c, v));
        }
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &mut per_row {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for &(c, v) in row.iter() {
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Identity matrix of size `n`.
    pub fn identity(n: usize) -> Self {
        let triplets: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &triplets)
    }

    /// Same sparsity pattern as `self`, all values zero.
    pub fn zeros_like(&self) -> Self {
        CsrMatrix {
            values: vec![0.0; self.values.len()],
            ..self.clone()
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn row_mut(&mut self, i: usize) -> (&[usize], &mut [f64]) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[span.clone()], &mut self.values[span])
    }

    /// Position of entry `(i, j)` in the value array, if present.
    pub fn entry_index(&self, i: usize, j: usize) -> Option<usize> {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .binary_search(&j)
            .ok()
            .map(|k| self.row_ptr[i] + k)
    }

    /// Value at `(i, j)`, zero when the entry is not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entry_index(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// True if both matrices share dimensions and sparsity pattern.
    pub fn same_pattern(&self, other: &CsrMatrix) -> bool {
        self.n_rows == other.n_rows
            && self.n_cols == other.n_cols
            && self.row_ptr == other.row_ptr
            && self.col_idx == other.col_idx
    }

    /// True if the pattern of the matrix equals the pattern of its transpose
    /// (finite element matrices always satisfy this, even when values differ).
    pub fn pattern_symmetric(&self) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        for i in 0..self.n_rows {
            let (cols, _) = self.row(i);
            for &j in cols {
                if self.entry_index(j, i).is_none() {
                    return false;
                }
            }
        }
        true
    }

    /// `y = A x` with a fixed (row-major) summation order.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        let mut y = vec![0.0; self.n_rows];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[i] = acc;
        }
        y
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.n_rows)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Matrix-market coordinate export (1-based indices, general symmetry).
    pub fn to_matrix_market(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        writeln!(out, "%%MatrixMarket matrix coordinate real general").unwrap();
        writeln!(out, "{} {} {}", self.n_rows, self.n_cols, self.nnz()).unwrap();
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                writeln!(out, "{} {} {:.17e}", i + 1, c + 1, v).unwrap();
            }
        }
        out
    }
}

/// Finite element coefficient vector: one value per mesh vertex plus the
/// Dirichlet flags of the underlying space.
#[derive(Clone, Debug, PartialEq)]
pub struct DofVector {
    pub values: Vec<f64>,
    pub dirichlet_mask: Vec<bool>,
}

impl DofVector {
    pub fn zeros(n: usize) -> Self {
        DofVector {
            values: vec![0.0; n],
            dirichlet_mask: vec![false; n],
        }
    }

    pub fn from_values(values: Vec<f64>, dirichlet_mask: Vec<bool>) -> Self {
        assert_eq!(values.len(), dirichlet_mask.len());
        DofVector {
            values,
            dirichlet_mask,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm2(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Reusable LU factorization of a sparse matrix (exact direct solver with
/// partial pivoting).
pub struct SparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl SparseLu {
    pub fn factorize(matrix: &CsrMatrix) -> Result<Self> {
        if matrix.n_rows() != matrix.n_cols() {
            return Err(Error::DimensionMismatch(format!(
                "cannot factorize a {}x{} matrix",
                matrix.n_rows(),
                matrix.n_cols()
            )));
        }
        // keep factorization and solves bitwise reproducible
        faer::set_global_parallelism(faer::Par::Seq);
        let n = matrix.n_rows();
        let mut triplets = Vec::with_capacity(matrix.nnz());
        for i in 0..n {
            let (cols, vals) = matrix.row(i);
            for (c, v) in cols.iter().zip(vals) {
                triplets.push(Triplet::new(i, *c, *v));
            }
        }
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::DimensionMismatch(format!("sparse conversion failed: {e:?}")))?;
        let lu = mat.sp_lu().map_err(|e| match e {
            faer::sparse::linalg::LuError::SymbolicSingular { index } => {
                Error::SingularMatrix { row: index }
            }
            other => Error::DimensionMismatch(format!("LU factorization failed: {other:?}")),
        })?;
        let this = SparseLu { n, lu };
        // numerically singular factorizations surface as non-finite solves
        let probe = this.solve_raw(&vec![1.0; n]);
        if let Some(row) = probe.iter().position(|v| !v.is_finite()) {
            return Err(Error::SingularMatrix { row });
        }
        Ok(this)
    }

    fn solve_raw(&self, rhs: &[f64]) -> Vec<f64> {
        let b = faer::Mat::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = self.lu.solve(&b);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(rhs.len(), self.n);
        let x = self.solve_raw(rhs);
        if let Some(row) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::SingularMatrix { row });
        }
        Ok(x)
    }
}

/// Solve `M x = rhs` with the direct solver, verifying the residual bound
/// `|M x - rhs|_2 <= 1e-10 (|M|_inf |x|_2 + |rhs|_2)`.
pub fn sparse_solve(matrix: &CsrMatrix, rhs: &DofVector) -> Result<DofVector> {
    let lu = SparseLu::factorize(matrix)?;
    let x = lu.solve(&rhs.values)?;
    let mx = matrix.matvec(&x);
    let res: f64 = mx
        .iter()
        .zip(&rhs.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let bound = 1e-10 * (matrix.inf_norm() * xn + rhs.norm2());
    if res > bound.max(1e-300) {
        return Err(Error::DimensionMismatch(format!(
            "direct solve residual {res:.3e} exceeds bound {bound:.3e}"
        )));
    }
    Ok(DofVector::from_values(x, rhs.dirichlet_mask.clone()))
}
