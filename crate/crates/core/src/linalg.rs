//! Small dense linear-algebra helpers on complex matrices.

use nalgebra::{DVector, SymmetricEigen};

use crate::{CMatrix, C64};

/// Largest entrywise deviation from Hermiticity, `max |m - m^dagger|`.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(m + m^dagger) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
///
/// Only the lower triangle of the Hermitian part is trusted; callers are
/// expected to have checked Hermiticity.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Smallest eigenvalue of a Hermitian matrix and a unit eigenvector for it.
pub fn min_eigenpair(m: &CMatrix) -> (f64, DVector<C64>) {
    let (values, vectors) = hermitian_eigen(m);
    let mut v = vectors.column(0).into_owned();
    // Fix the global phase so the largest component is real positive.
    if let Some((_, big)) = v.iter().enumerate().max_by(|a, b| a.1.norm().total_cmp(&b.1.norm())) {
        if big.norm() > 0.0 {
            let phase = big.conj() / big.norm();
            v *= phase;
        }
    }
    (values[0], v)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    let eig = SymmetricEigen::new(hermitian_part(m));
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Real part of the determinant of a principal submatrix.
pub fn principal_minor(m: &CMatrix, subset: &[usize]) -> f64 {
    let k = subset.len();
    if k == 0 {
        return 1.0;
    }
    let sub = CMatrix::from_fn(k, k, |r, c| m[(subset[r], subset[c])]);
    sub.determinant().re
}

/// `c^dagger m c`.
pub fn hermitian_form(m: &CMatrix, c: &DVector<C64>) -> C64 {
    (c.adjoint() * m * c)[(0, 0)]
}

/// Frobenius norm.
pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest entrywise modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `Tr(a b)` without forming the product.
pub fn trace_of_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}
