//! Dense helpers built on nalgebra: an SPD factorization that reports its
//! failing pivot, and weighted Gram products.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
#[allow(unused_imports)]
use crate::prelude::*;

/// Diagonal inflation applied on the single retry after a failed factorization.
pub const JITTER: f64 = 1e-10;

/// Lower Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    l: DMatrix<f64>,
}

fn cholesky_in_place(mut a: DMatrix<f64>) -> core::result::Result<DMatrix<f64>, f64> {
    let n = a.nrows();
    for k in 0..n {
        let pivot = a[(k, k)];
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(pivot);
        }
        let d = pivot.sqrt();
        a[(k, k)] = d;
        for i in k + 1..n {
            a[(i, k)] /= d;
        }
        for j in k + 1..n {
            let ljk = a[(j, k)];
            if ljk != 0.0 {
                for i in j..n {
                    let lik = a[(i, k)];
                    a[(i, j)] -= lik * ljk;
                }
            }
        }
    }
    for j in 1..n {
        for i in 0..j {
            a[(i, j)] = 0.0;
        }
    }
    Ok(a)
}

impl SpdFactor {
    /// Factorizes `a` (only the lower triangle is read).
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::arg("factorization needs a square matrix"));
        }
        cholesky_in_place(a.clone())
            .map(|l| Self { l })
            .map_err(|min_pivot| Error::NotPositiveDefinite { min_pivot })
    }

    /// Like [`SpdFactor::new`], retrying once with [`JITTER`] added to the diagonal.
    pub fn with_jitter(a: &DMatrix<f64>) -> Result<Self> {
        match Self::new(a) {
            Ok(f) => Ok(f),
            Err(Error::NotPositiveDefinite { .. }) => {
                let mut b = a.clone();
                for i in 0..b.nrows() {
                    b[(i, i)] += JITTER;
                }
                Self::new(&b)
            }
            Err(e) => Err(e),
        }
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// `A^{-1} b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut DVector<f64>) {
        self.l.solve_lower_triangular_unchecked_mut(x);
        self.l.tr_solve_lower_triangular_unchecked_mut(x);
    }

    /// `A^{-1} B` for a matrix right-hand side.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        self.l.solve_lower_triangular_unchecked_mut(&mut x);
        self.l.tr_solve_lower_triangular_unchecked_mut(&mut x);
        x
    }

    /// Maps a standard-normal vector `z` to `L^{-T} z`, a draw with covariance `A^{-1}`.
    pub fn whiten_in_place(&self, z: &mut DVector<f64>) {
        self.l.tr_solve_lower_triangular_unchecked_mut(z);
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.solve_matrix(&DMatrix::identity(self.dim(), self.dim()))
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

/// `Aᵀ diag(w) B`.
pub fn weighted_cross(a: &DMatrix<f64>, w: &[f64], b: &DMatrix<f64>) -> DMatrix<f64> {
    debug_assert_eq!(a.nrows(), w.len());
    let mut wb = b.clone();
    for (i, &wi) in w.iter().enumerate() {
        wb.row_mut(i).scale_mut(wi);
    }
    a.tr_mul(&wb)
}

/// `Aᵀ diag(w) A`.
pub fn weighted_gram(a: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    weighted_cross(a, w, a)
}

/// `Aᵀ diag(w) v`.
pub fn weighted_tr_mul_vec(a: &DMatrix<f64>, w: &[f64], v: &DVector<f64>) -> DVector<f64> {
    let wv = DVector::from_iterator(v.len(), v.iter().zip(w).map(|(x, wi)| x * wi));
    a.tr_mul(&wv)
}

/// Keeps the rows of `a` whose index is listed.
pub fn select_rows(a: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), a.ncols(), |i, j| a[(rows[i], j)])
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in j + 1..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_solves_and_inverts() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let f = SpdFactor::new(&a).unwrap();
        let l = f.lower();
        assert!(max_abs_diff(&(l * l.transpose()), &a) < 1e-14);
        let inv = f.inverse();
        assert!(max_abs_diff(&(&a * inv), &DMatrix::identity(3, 3)) < 1e-14);
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        assert!((&a * f.solve(&b) - b).amax() < 1e-14);
        assert!((f.log_det() - a.determinant().ln()).abs() < 1e-13);
    }

    #[test]
    fn indefinite_matrix_reports_pivot() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match SpdFactor::with_jitter(&a) {
            Err(Error::NotPositiveDefinite { min_pivot }) => assert!((min_pivot + 3.0).abs() < 1e-9),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn jitter_rescues_borderline_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(SpdFactor::new(&a).is_err());
        assert!(SpdFactor::with_jitter(&a).is_ok());
    }

    #[test]
    fn weighted_gram_matches_dense() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 1.0, -1.0, 3.0]);
        let w = [0.5, 2.0, 1.5];
        let dense = a.transpose() * DMatrix::from_diagonal(&DVector::from_row_slice(&w)) * &a;
        assert!(max_abs_diff(&weighted_gram(&a, &w), &dense) < 1e-14);
    }
}
