//! Small dense helpers on top of nalgebra.

use nalgebra::{ComplexField, DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;

const EIG_EPS: f64 = 1e-15;
const EIG_MAX_ITER: usize = 10_000;

/// Symmetric part `(M + M^T) / 2`.
pub fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix in ascending order, or `None` if the solver fails.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Option<Vec<f64>> {
    if m.nrows() == 0 {
        return Some(Vec::new());
    }
    let eig = SymmetricEigen::try_new(m.clone(), EIG_EPS, EIG_MAX_ITER)?;
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    Some(vals)
}

pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> Option<f64> {
    sym_eigenvalues(&sym(m)).map(|v| v.first().copied().unwrap_or(f64::INFINITY))
}

pub fn max_sym_eigenvalue(m: &DMatrix<f64>) -> Option<f64> {
    sym_eigenvalues(&sym(m)).map(|v| v.last().copied().unwrap_or(f64::NEG_INFINITY))
}

/// Eigenvalues of a general real matrix.
pub fn eigenvalues_real(m: &DMatrix<f64>) -> Option<Vec<Complex64>> {
    if m.nrows() == 0 {
        return Some(Vec::new());
    }
    let schur = Schur::try_new(m.clone(), EIG_EPS, EIG_MAX_ITER)?;
    Some(schur.complex_eigenvalues().iter().copied().collect())
}

/// Eigenvalues of a general complex matrix.
pub fn eigenvalues_complex(m: &DMatrix<Complex64>) -> Option<Vec<Complex64>> {
    if m.nrows() == 0 {
        return Some(Vec::new());
    }
    let schur = Schur::try_new(m.clone(), EIG_EPS, EIG_MAX_ITER)?;
    schur.eigenvalues().map(|v| v.iter().copied().collect())
}

pub fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn largest_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Inverse of a square matrix if it is numerically nonsingular.
pub fn checked_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let smax = largest_singular_value(m);
    let smin = smallest_singular_value(m);
    if !(smin > 1e-14 * smax.max(1.0)) {
        return None;
    }
    m.clone().try_inverse()
}

/// Principal square root of a symmetric positive semi-definite matrix.
pub fn sqrt_spd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eig = SymmetricEigen::try_new(sym(m), EIG_EPS, EIG_MAX_ITER)?;
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Some(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

pub fn frobenius_c(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn all_finite_vec(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Complex matrix exponential.
pub fn expm_c(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    if m.nrows() == 0 {
        return m.clone();
    }
    if m.iter().all(|c| c.norm_sqr() == 0.0) {
        return DMatrix::identity(m.nrows(), m.ncols());
    }
    m.clone().exp()
}

pub fn spectral_radius(vals: &[Complex64]) -> f64 {
    vals.iter().map(|c| c.modulus()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_of_diagonal() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 9.0]);
        let r = sqrt_spd(&m).unwrap();
        assert!((r[(0, 0)] - 2.0).abs() < 1e-14);
        assert!((r[(1, 1)] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn rotation_has_imaginary_spectrum() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let vals = eigenvalues_real(&m).unwrap();
        for v in vals {
            assert!(v.re.abs() < 1e-14);
            assert!((v.im.abs() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_matrix_has_no_checked_inverse() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(checked_inverse(&m).is_none());
    }
}
