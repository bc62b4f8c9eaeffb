//! Small dense linear algebra: SPD solves and symmetric eigendecomposition.
//!
//! Every system in this crate is tiny (the column updates are r×r with r ≤ d+2,
//! barrier Newton systems have at most a few hundred unknowns), so everything
//! here is dense.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Dense symmetric matrix. Symmetry is enforced on construction by averaging
/// the input with its transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let t = m.transpose();
        Ok(Self((m + t) * 0.5))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// Builds `pᵀp` for a d×m matrix `p`.
    pub fn gram(p: &DMatrix<f64>) -> Self {
        Self(p.transpose() * p)
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

/// Solves `A x = b` for symmetric positive definite `A` by Cholesky
/// factorization.
pub fn solve_spd(a: &SymMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.order();
    if b.len() != n {
        return Err(Error::Dimension(format!(
            "rhs has length {} for a system of order {n}",
            b.len()
        )));
    }
    let mut l = a.0.as_slice().to_vec();
    cholesky_in_place(&mut l, n)?;
    let mut x = b.to_vec();
    cholesky_solve(&l, n, &mut x);
    Ok(x)
}

/// In-place lower Cholesky factorization of a column-major `n×n` buffer.
/// Only the lower triangle of the result is meaningful.
pub(crate) fn cholesky_in_place(a: &mut [f64], n: usize) -> Result<()> {
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            let ljk = a[k * n + j];
            diag -= ljk * ljk;
        }
        if diag <= 0.0 || !diag.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let ljj = diag.sqrt();
        a[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut s = a[j * n + i];
            for k in 0..j {
                s -= a[k * n + i] * a[k * n + j];
            }
            a[j * n + i] = s / ljj;
        }
    }
    Ok(())
}

/// Solves `L Lᵀ x = b` in place given the factor from [`cholesky_in_place`].
pub(crate) fn cholesky_solve(l: &[f64], n: usize, x: &mut [f64]) {
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[i * n + k] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
/// Column `k` of the returned matrix is the unit eigenvector of `values[k]`.
pub fn eig_sym(x: &SymMatrix) -> (Vec<f64>, DMatrix<f64>) {
    let n = x.order();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(x.0.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(x: &SymMatrix) -> f64 {
    if x.order() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(x.0.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Orthonormal basis of the null space of a `m×n` matrix with full row rank,
/// returned as an `n×(n-m)` matrix.
pub(crate) fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = a.shape();
    if m == 0 {
        return DMatrix::identity(n, n);
    }
    // Eigenvectors of AᵀA with (numerically) zero eigenvalues span ker A.
    let ata = SymMatrix(a.transpose() * a);
    let (values, vectors) = eig_sym(&ata);
    let scale = values.first().copied().unwrap_or(0.0).max(1.0);
    let rank = values.iter().filter(|&&v| v > 1e-12 * scale).count();
    vectors.columns(rank, n - rank).into_owned()
}
