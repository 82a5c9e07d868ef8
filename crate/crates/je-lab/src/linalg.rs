//! Dense complex linear algebra helpers on top of nalgebra: LU solves, a
//! Hager-style one-norm condition estimate, and the smallest eigenvalue of a
//! Hermitian matrix.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// LU factorization with partial pivoting, kept for repeated solves.
pub struct LuSolver {
    lu: nalgebra::linalg::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
    n: usize,
    one_norm: f64,
}

impl LuSolver {
    pub fn new(matrix: DMatrix<Complex64>) -> Result<Self> {
        let n = matrix.nrows();
        let one_norm = one_norm(&matrix);
        let lu = matrix.lu();
        // Reject exactly singular factorizations.
        for i in 0..n {
            if lu.u()[(i, i)].norm() == 0.0 {
                return Err(Error::SingularSystem(n));
            }
        }
        Ok(Self { lu, n, one_norm })
    }

    pub fn solve(&self, rhs: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        self.lu
            .solve(rhs)
            .ok_or(Error::SingularSystem(self.n))
    }

    /// One-norm condition estimate ||A||_1 * est(||A^-1||_1) by Hager's
    /// power iteration on the dual norm. Needs the original matrix to
    /// factor its adjoint for the dual solves.
    pub fn condition_estimate(&self, original: &DMatrix<Complex64>) -> f64 {
        let n = self.n;
        if n == 0 {
            return 1.0;
        }
        let adjoint_lu = match LuSolver::new(original.adjoint()) {
            Ok(lu) => lu,
            Err(_) => return f64::INFINITY,
        };
        let mut x = DVector::from_element(n, Complex64::new(1.0 / n as f64, 0.0));
        let mut est = 0.0f64;
        for _ in 0..6 {
            let y = match self.solve(&x) {
                Ok(y) => y,
                Err(_) => return f64::INFINITY,
            };
            let y1: f64 = y.iter().map(|v| v.norm()).sum();
            // Dual step: sign pattern of y through the adjoint solve.
            let xi = y.map(|v| {
                let m = v.norm();
                if m == 0.0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    v / m
                }
            });
            let z = match adjoint_lu.solve(&xi) {
                Ok(z) => z,
                Err(_) => return f64::INFINITY,
            };
            let (mut best, mut best_j) = (0.0f64, 0usize);
            for (j, v) in z.iter().enumerate() {
                if v.norm() > best {
                    best = v.norm();
                    best_j = j;
                }
            }
            if y1 <= est {
                break;
            }
            est = y1;
            x = DVector::from_element(n, Complex64::ZERO);
            x[best_j] = Complex64::new(1.0, 0.0);
        }
        est.max(1.0 / self.one_norm.max(f64::MIN_POSITIVE)) * self.one_norm
    }
}

pub fn one_norm(m: &DMatrix<Complex64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..m.ncols() {
        let s: f64 = m.column(j).iter().map(|v| v.norm()).sum();
        best = best.max(s);
    }
    best
}

/// Smallest eigenvalue of a Hermitian matrix; the input is symmetrized to
/// absorb roundoff before the eigensolve.
pub fn min_eigenvalue_hermitian(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let herm = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = herm.symmetric_eigenvalues();
    eig.iter().cloned().fold(f64::INFINITY, f64::min)
}
