//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

/// Solve a symmetric positive-definite system with an eigenvalue-based
/// condition guard. Returns a human-readable reason on failure.
pub(crate) fn spd_solve(
    mat: &DMatrix<f64>,
    rhs: &[f64],
    condition_bound: f64,
) -> std::result::Result<Vec<f64>, String> {
    let eigen = mat.clone().symmetric_eigen();
    let mut min = f64::INFINITY;
    let mut max = 0.0f64;
    for &l in eigen.eigenvalues.iter() {
        min = min.min(l);
        max = max.max(l);
    }
    if min <= 0.0 {
        return Err(format!("matrix is not positive definite (eigenvalue {min:.3e})"));
    }
    if max / min > condition_bound {
        return Err(format!(
            "condition number {:.3e} exceeds bound {condition_bound:.1e}",
            max / min
        ));
    }
    let b = DVector::from_column_slice(rhs);
    let y = eigen.eigenvectors.transpose() * &b;
    let scaled = DVector::from_iterator(
        y.len(),
        y.iter().zip(eigen.eigenvalues.iter()).map(|(v, l)| v / l),
    );
    Ok((eigen.eigenvectors * scaled).iter().copied().collect())
}

/// I_a (x) (1, -gamma'): the a x a(d+1) coefficient matrix.
pub(crate) fn coefficient_matrix(a: usize, gamma: &[f64]) -> DMatrix<f64> {
    let width = gamma.len() + 1;
    let mut m = DMatrix::zeros(a, a * width);
    for i in 0..a {
        m[(i, i * width)] = 1.0;
        for (r, &g) in gamma.iter().enumerate() {
            m[(i, i * width + r + 1)] = -g;
        }
    }
    m
}

/// 1/2 * 1_a (x) (0, 1_d')': zero for outcome slots, one half for covariates.
pub(crate) fn centering_vector(a: usize, d: usize) -> DVector<f64> {
    DVector::from_fn(a * (d + 1), |idx, _| if idx % (d + 1) == 0 { 0.0 } else { 0.5 })
}
