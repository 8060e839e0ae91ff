//! Small dense helpers on top of nalgebra's stack-allocated matrices.

use nalgebra::{Matrix2, Matrix3, Matrix4, SMatrix, Vector4};

/// Eigenvalue floor below which a covariance counts as indefinite.
pub const EIGEN_FLOOR: f64 = -1e-9;

/// Relative tolerance used by the PSD checks: `-1e-9 * (1 + trace)`.
pub fn psd_tolerance(trace: f64) -> f64 {
    1e-9 * (1.0 + trace.abs())
}

pub fn symmetrize<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}

pub fn max_asymmetry<const N: usize>(m: &SMatrix<f64, N, N>) -> f64 {
    (m - m.transpose()).amax()
}

/// Eigenvalues of a real symmetric 2x2 matrix, ascending.
pub fn sym2_eigenvalues(m: &Matrix2<f64>) -> (f64, f64) {
    let mean = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let half_diff = 0.5 * (m[(0, 0)] - m[(1, 1)]);
    let off = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let radius = half_diff.hypot(off);
    (mean - radius, mean + radius)
}

/// Smallest eigenvalue of the Hermitian matrix `S + i K` where `S` is the real
/// symmetric part and `K = [[0, k], [-k, 0]]` is real antisymmetric.
pub fn hermitian2_min_eigenvalue(sym: &Matrix2<f64>, k: f64) -> f64 {
    let mean = 0.5 * (sym[(0, 0)] + sym[(1, 1)]);
    let half_diff = 0.5 * (sym[(0, 0)] - sym[(1, 1)]);
    let off_re = 0.5 * (sym[(0, 1)] + sym[(1, 0)]);
    let radius = (half_diff * half_diff + off_re * off_re + k * k).sqrt();
    mean - radius
}

/// Solves `A X + X Aᵀ + Q = 0` for a 2x2 `X` through the Kronecker form.
/// Returns `None` when the operator `I⊗A + A⊗I` is singular.
pub fn solve_lyapunov2(a: &Matrix2<f64>, q: &Matrix2<f64>) -> Option<Matrix2<f64>> {
    let id = Matrix2::<f64>::identity();
    let mut op = Matrix4::<f64>::zeros();
    // vec() is column-major: vec(AX) = (I⊗A) vec(X), vec(XAᵀ) = (A⊗I) vec(X)
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    op[(2 * i + k, 2 * j + l)] = id[(i, j)] * a[(k, l)] + a[(i, j)] * id[(k, l)];
                }
            }
        }
    }
    let rhs = -Vector4::new(q[(0, 0)], q[(1, 0)], q[(0, 1)], q[(1, 1)]);
    let x = op.lu().solve(&rhs)?;
    Some(symmetrize(&Matrix2::new(x[0], x[2], x[1], x[3])))
}

/// True when every eigenvalue of the symmetric `m` is at least `-floor_abs`,
/// tested by a Cholesky factorisation of `m + floor_abs·I`.
pub fn cholesky_shift_ok3(m: &Matrix3<f64>, floor_abs: f64) -> bool {
    let a00 = m[(0, 0)] + floor_abs;
    if a00 <= 0.0 {
        return false;
    }
    let l00 = a00.sqrt();
    let l10 = m[(1, 0)] / l00;
    let l20 = m[(2, 0)] / l00;
    let a11 = m[(1, 1)] + floor_abs - l10 * l10;
    if a11 <= 0.0 {
        return false;
    }
    let l11 = a11.sqrt();
    let l21 = (m[(2, 1)] - l20 * l10) / l11;
    let a22 = m[(2, 2)] + floor_abs - l20 * l20 - l21 * l21;
    a22 > 0.0
}

/// Clips eigenvalues below zero. Returns the repaired matrix and the most
/// negative eigenvalue that was found.
pub fn clip_negative_eigenvalues3(m: &Matrix3<f64>) -> (Matrix3<f64>, f64) {
    let eig = m.symmetric_eigen();
    let lowest = eig.eigenvalues.min();
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let repaired =
        eig.eigenvectors * Matrix3::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    (symmetrize(&repaired), lowest)
}

pub fn clip_negative_eigenvalues2(m: &Matrix2<f64>) -> (Matrix2<f64>, f64) {
    let eig = m.symmetric_eigen();
    let lowest = eig.eigenvalues.min();
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let repaired =
        eig.eigenvectors * Matrix2::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    (symmetrize(&repaired), lowest)
}
