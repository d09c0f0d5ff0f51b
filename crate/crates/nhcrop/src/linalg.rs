//! Dense symmetric positive-definite helpers for the small design matrices
//! used by the demand model (dimension ~15). Row-major `Vec<f64>` storage.

/// Cholesky factorization `A = L L^T` of a symmetric matrix, returning the
/// lower factor row-major, or `None` if the matrix is not positive definite.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !s.is_finite() || s <= 0.0 {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solve `L z = b` for lower-triangular `L` (forward substitution).
pub fn forward_solve_into(l: &[f64], n: usize, b: &[f64], z: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * z[k];
        }
        z[i] = s / l[i * n + i];
    }
}

/// Quadratic form `phi^T A^{-1} phi` given the Cholesky factor of `A`:
/// with `L z = phi`, the form equals `||z||^2`.
pub fn inv_quad_form(l: &[f64], n: usize, phi: &[f64], scratch: &mut [f64]) -> f64 {
    forward_solve_into(l, n, phi, scratch);
    scratch.iter().map(|z| z * z).sum()
}

/// Symmetric rank-one accumulation `A += phi phi^T`.
pub fn rank_one_update(a: &mut [f64], n: usize, phi: &[f64]) {
    for i in 0..n {
        let pi = phi[i];
        for j in 0..n {
            a[i * n + j] += pi * phi[j];
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Identity scaled by `ridge`.
pub fn scaled_identity(n: usize, ridge: f64) -> Vec<f64> {
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        a[i * n + i] = ridge;
    }
    a
}
