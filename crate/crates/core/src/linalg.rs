//! Dense complex matrix helpers shared by every module.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix; the carrier for channels, weights and bounds.
pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

/// Relative eigenvalue tolerance under which a Hermitian matrix counts as PSD.
pub const PSD_TOLERANCE: f64 = 1e-10;

pub fn identity(dim: usize) -> ComplexMatrix {
    ComplexMatrix::identity(dim, dim)
}

pub fn frobenius_norm(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `Tr{A B}` without forming the product.
pub fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Complex64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Real part of `Tr{A B}`; exact for Hermitian `A`, `B`.
pub fn trace_product_re(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    trace_product(a, b).re
}

pub fn trace_re(m: &ComplexMatrix) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

pub fn hermitian_part(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues sorted ascending.
///
/// Only the Hermitian part of `m` is used.
pub fn hermitian_eigen(m: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), ComplexMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn min_eigenvalue(m: &ComplexMatrix) -> f64 {
    hermitian_eigen(m).0.first().copied().unwrap_or(0.0)
}

pub fn ensure_square(m: &ComplexMatrix, dim: usize) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::dims(
            format!("{dim}x{dim}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

/// Hermitian and `λ_min ≥ −tol·‖m‖_F`.
pub fn is_psd(m: &ComplexMatrix, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = frobenius_norm(m);
    let skew = frobenius_norm(&(m - m.adjoint()));
    if skew > 1e-9 * scale.max(1.0) {
        return false;
    }
    min_eigenvalue(m) >= -tol * scale
}

pub fn ensure_psd(m: &ComplexMatrix, name: &'static str) -> Result<()> {
    if is_psd(m, PSD_TOLERANCE) {
        Ok(())
    } else {
        Err(Error::NotPsd {
            name,
            min_eigenvalue: min_eigenvalue(m),
        })
    }
}

/// Principal square root of a PSD matrix (negative eigenvalues clipped).
pub fn psd_sqrt(m: &ComplexMatrix) -> ComplexMatrix {
    psd_function(m, |x| x.max(0.0).sqrt())
}

/// Applies `f` to the eigenvalues of a Hermitian matrix.
pub fn psd_function(m: &ComplexMatrix, f: impl Fn(f64) -> f64) -> ComplexMatrix {
    let (values, vectors) = hermitian_eigen(m);
    let n = m.nrows();
    let mut out = ComplexMatrix::zeros(n, n);
    for (k, &lambda) in values.iter().enumerate() {
        let fk = f(lambda);
        if fk == 0.0 {
            continue;
        }
        let v = vectors.column(k);
        out += (v * v.adjoint()).scale(fk);
    }
    out
}

/// Column-stacking vectorization.
pub fn vec(m: &ComplexMatrix) -> ComplexVector {
    ComplexVector::from_iterator(m.len(), m.iter().copied())
}

/// `v vᴴ` scaled by `power`.
pub fn outer(v: &ComplexVector, power: f64) -> ComplexMatrix {
    (v * v.adjoint()).scale(power)
}

pub fn real_matrix(rows: usize, cols: usize, data: &[f64]) -> ComplexMatrix {
    ComplexMatrix::from_row_iterator(rows, cols, data.iter().map(|&x| Complex64::new(x, 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn trace_product_matches_full_product() {
        let a = ComplexMatrix::from_row_slice(2, 2, &[c(1.0, 2.0), c(0.5, -1.0), c(3.0, 0.0), c(-2.0, 1.0)]);
        let b = ComplexMatrix::from_row_slice(2, 2, &[c(0.0, 1.0), c(2.0, 2.0), c(1.0, -1.0), c(4.0, 0.0)]);
        let full = (&a * &b).trace();
        let fast = trace_product(&a, &b);
        assert!((full - fast).norm() < 1e-14);
    }

    #[test]
    fn eigen_sorted_and_reconstructs() {
        let m = ComplexMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(3.0, 0.0)]);
        let (values, vectors) = hermitian_eigen(&m);
        assert!(values[0] <= values[1]);
        let rebuilt = &vectors
            * ComplexMatrix::from_diagonal(&DVector::from_iterator(2, values.iter().map(|&x| c(x, 0.0))))
            * vectors.adjoint();
        assert!(frobenius_norm(&(rebuilt - &m)) < 1e-12);
    }

    #[test]
    fn psd_checks() {
        assert!(is_psd(&identity(3), PSD_TOLERANCE));
        let neg = real_matrix(2, 2, &[1.0, 0.0, 0.0, -1e-3]);
        assert!(!is_psd(&neg, PSD_TOLERANCE));
        let not_hermitian = real_matrix(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(!is_psd(&not_hermitian, PSD_TOLERANCE));
        let s = psd_sqrt(&real_matrix(2, 2, &[4.0, 0.0, 0.0, 9.0]));
        assert!((s[(0, 0)].re - 2.0).abs() < 1e-14 && (s[(1, 1)].re - 3.0).abs() < 1e-14);
    }
}
