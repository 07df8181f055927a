//! Small dense helpers shared by the solver, the norm oracle and the model.

use nalgebra::{Complex, DMatrix};

pub(crate) fn to_faer(m: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub(crate) fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = m.clone();
    symmetrize(&mut s);
    s
}

/// Smallest eigenvalue of a symmetric matrix (`+inf` for an empty one).
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

/// Largest eigenvalue of a symmetric matrix (`-inf` for an empty one).
pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(m).last().copied().unwrap_or(f64::NEG_INFINITY)
}

/// Largest real part over the spectrum of a square matrix.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Eigenvalues of a symmetric matrix in nondecreasing order.
pub(crate) fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let f = to_faer(&symmetric_part(m));
    match f.self_adjoint_eigenvalues(faer::Side::Lower) {
        Ok(v) => v,
        Err(_) => {
            let mut v: Vec<f64> = symmetric_part(m).symmetric_eigenvalues().iter().copied().collect();
            v.sort_by(f64::total_cmp);
            v
        }
    }
}

pub(crate) fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    if m.is_empty() {
        return Vec::new();
    }
    match to_faer(m).eigenvalues() {
        Ok(v) => v.into_iter().map(|z| Complex::new(z.re, z.im)).collect(),
        Err(_) => m.complex_eigenvalues().iter().copied().collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extreme_eigenvalues() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!((min_eigenvalue(&m) - 1.0).abs() < 1e-14);
        assert!((max_eigenvalue(&m) - 3.0).abs() < 1e-14);
        assert_eq!(min_eigenvalue(&DMatrix::zeros(0, 0)), f64::INFINITY);
    }

    #[test]
    fn abscissa_of_a_rotation_generator() {
        let m = DMatrix::from_row_slice(2, 2, &[-0.5, 3.0, -3.0, -0.5]);
        assert!((spectral_abscissa(&m) + 0.5).abs() < 1e-12);
    }
}
