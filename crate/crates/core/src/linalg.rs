//! Sparse matrices and a direct solver, backed by `faer`.

use faer::prelude::*;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("sparse assembly failed: {0}")]
    Assembly(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
}

/// Compressed sparse column matrix of `f64`.
#[derive(Debug, Clone)]
pub struct Sparse {
    inner: SparseColMat<usize, f64>,
}

impl Sparse {
    /// Duplicate entries are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, entries: &[(usize, usize, f64)]) -> Self {
        let t: Vec<_> = entries
            .iter()
            .map(|&(r, c, v)| Triplet::new(r, c, v))
            .collect();
        let inner = SparseColMat::try_new_from_triplets(nrows, ncols, &t)
            .expect("triplet indices are in range by construction");
        Self { inner }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::from_triplets(nrows, ncols, &[])
    }

    pub fn nrows(&self) -> usize {
        self.inner.nrows()
    }
    pub fn ncols(&self) -> usize {
        self.inner.ncols()
    }
    pub fn nnz(&self) -> usize {
        self.inner.compute_nnz()
    }

    /// Stored entries in column-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let m = self.inner.as_ref();
        let mut out = Vec::with_capacity(self.nnz());
        for c in 0..self.ncols() {
            for (r, v) in m.row_idx_of_col(c).zip(m.val_of_col(c)) {
                out.push((r, c, *v));
            }
        }
        out
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols(), "dimension mismatch in sparse product");
        let mut y = vec![0.0; self.nrows()];
        let m = self.inner.as_ref();
        for (c, xc) in x.iter().enumerate() {
            if *xc == 0.0 {
                continue;
            }
            for (r, v) in m.row_idx_of_col(c).zip(m.val_of_col(c)) {
                y[r] += v * xc;
            }
        }
        y
    }

    /// Sparse product `self · rhs`.
    pub fn matmul(&self, rhs: &Sparse) -> Self {
        assert_eq!(self.ncols(), rhs.nrows(), "dimension mismatch in sparse product");
        let a = self.inner.as_ref();
        let mut out = Vec::new();
        for (k, j, b) in rhs.triplets() {
            for (i, v) in a.row_idx_of_col(k).zip(a.val_of_col(k)) {
                out.push((i, j, v * b));
            }
        }
        Self::from_triplets(self.nrows(), rhs.ncols(), &out)
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.ncols(), self.nrows(), &t)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.nrows(), self.ncols());
        for (r, c, v) in self.triplets() {
            d[(r, c)] += v;
        }
        d
    }

    /// Sparse LU factorization with fill-reducing ordering.
    pub fn lu(&self) -> Result<SparseLu, LinalgError> {
        let lu = self
            .inner
            .sp_lu()
            .map_err(|e| LinalgError::Factorization(format!("{e:?}")))?;
        Ok(SparseLu { lu, n: self.nrows() })
    }
}

/// A factored square matrix.
pub struct SparseLu {
    lu: Lu<usize, f64>,
    n: usize,
}

impl std::fmt::Debug for SparseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseLu").field("n", &self.n).finish()
    }
}

impl SparseLu {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Mat::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
