//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Replaces `m` by its symmetric part `(m + m') / 2`.
pub fn symmetrize<T: Scalar>(m: &mut DMatrix<T>) {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    let half = T::lit(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_symmetric_eigenvalue<T: Scalar>(m: &DMatrix<T>) -> T {
    let mut s = m.clone();
    symmetrize(&mut s);
    let eig = SymmetricEigen::new(s);
    let mut min = eig.eigenvalues[0];
    for e in eig.eigenvalues.iter().skip(1) {
        if *e < min {
            min = *e;
        }
    }
    min
}

/// Largest absolute asymmetry `max |m_ij - m_ji|`.
pub fn max_asymmetry<T: Scalar>(m: &DMatrix<T>) -> T {
    let n = m.nrows();
    let mut worst = T::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Checks that `m` is positive semidefinite up to `-tol` on the spectrum.
pub fn require_psd<T: Scalar>(what: &str, m: &DMatrix<T>, tol: T) -> Result<()> {
    let min = min_symmetric_eigenvalue(m);
    if min < -tol {
        return Err(Error::NotPsd {
            what: what.into(),
            eigenvalue: min.as_f64(),
        });
    }
    Ok(())
}

/// Symmetric positive semidefinite square root via the spectral decomposition.
/// Slightly negative eigenvalues (roundoff) are clamped to zero.
pub fn psd_sqrt<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    let mut s = m.clone();
    symmetrize(&mut s);
    let eig = SymmetricEigen::new(s);
    let n = m.nrows();
    let mut scaled = eig.eigenvectors.clone();
    for j in 0..n {
        let lambda = eig.eigenvalues[j].max(T::zero()).sqrt();
        for i in 0..n {
            scaled[(i, j)] *= lambda;
        }
    }
    &scaled * eig.eigenvectors.transpose()
}

/// Solves `a x = b` by LU with partial pivoting; `None` when singular.
pub fn lu_solve<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> Option<DMatrix<T>> {
    a.clone().lu().solve(b)
}

/// Vector right-hand-side variant of [`lu_solve`].
pub fn lu_solve_vec<T: Scalar>(a: &DMatrix<T>, b: &nalgebra::DVector<T>) -> Option<nalgebra::DVector<T>> {
    a.clone().lu().solve(b)
}
