//! Closed-form 2x2 matrix helpers used throughout: symmetrization, matrix
//! exponential/logarithm, and SPD checks. All exact formulas, no iteration.

use nalgebra::Matrix2;

use crate::rod::IMat2;

pub fn sym(m: &Matrix2<f64>) -> Matrix2<f64> {
    0.5 * (m + m.transpose())
}

pub fn is_spd(m: &Matrix2<f64>) -> bool {
    m[(0, 0)] > 0.0 && m.determinant() > 0.0
}

/// exp(M) for a 2x2 matrix via the Cayley-Hamilton closed form.
pub fn exp2(m: &Matrix2<f64>) -> Matrix2<f64> {
    let t = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let b = m - Matrix2::identity() * t;
    // b is trace-free, so b^2 = d2 * I
    let d2 = b[(0, 0)] * b[(0, 0)] + b[(0, 1)] * b[(1, 0)];
    let (c, s) = if d2 > 1e-24 {
        let d = d2.sqrt();
        (d.cosh(), d.sinh() / d)
    } else if d2 < -1e-24 {
        let d = (-d2).sqrt();
        (d.cos(), d.sin() / d)
    } else {
        (1.0 + 0.5 * d2, 1.0 + d2 / 6.0)
    };
    (Matrix2::identity() * c + b * s) * t.exp()
}

/// Eigendecomposition of a symmetric 2x2 matrix: ((l1, l2), rotation angle).
/// Columns of the rotation R(theta) are the eigenvectors.
pub fn sym_eigen(m: &Matrix2<f64>) -> ((f64, f64), f64) {
    let a = m[(0, 0)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let d = m[(1, 1)];
    let tr = a + d;
    let diff = a - d;
    let rad = (diff * diff + 4.0 * b * b).sqrt();
    let l1 = 0.5 * (tr + rad);
    let l2 = 0.5 * (tr - rad);
    let theta = 0.5 * (2.0 * b).atan2(diff);
    ((l1, l2), theta)
}

fn from_eigen(l1: f64, l2: f64, theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(
        c * c * l1 + s * s * l2,
        s * c * (l1 - l2),
        s * c * (l1 - l2),
        s * s * l1 + c * c * l2,
    )
}

/// log(M) for SPD M.
pub fn log_spd(m: &Matrix2<f64>) -> Matrix2<f64> {
    let ((l1, l2), theta) = sym_eigen(m);
    assert!(l1 > 0.0 && l2 > 0.0, "log_spd of non-SPD matrix");
    from_eigen(l1.ln(), l2.ln(), theta)
}

/// exp(M) for symmetric M through the eigenbasis (exactly symmetric result).
pub fn exp_sym(m: &Matrix2<f64>) -> Matrix2<f64> {
    let ((l1, l2), theta) = sym_eigen(m);
    from_eigen(l1.exp(), l2.exp(), theta)
}

/// Unit eigenvector of the smallest eigenvalue of a symmetric matrix.
pub fn smallest_eigenvector(m: &Matrix2<f64>) -> (f64, f64) {
    let (_, theta) = sym_eigen(m);
    // columns of R(theta) are (c, s) for l1 and (-s, c) for l2; l2 <= l1
    let (s, c) = theta.sin_cos();
    (-s, c)
}

pub fn imat_to_f64(m: &IMat2) -> Matrix2<f64> {
    Matrix2::new(m[0][0] as f64, m[0][1] as f64, m[1][0] as f64, m[1][1] as f64)
}
