//! Small dense helpers on top of nalgebra.

use nalgebra::{SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::{CMatrix, CVector};

/// Relative threshold on the singular values of `R = U U^h` used for every rank report.
pub const RANK_THRESHOLD: f64 = 1e-6;

pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = SVD::new(m.clone(), false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Numerical rank of `U U^h`: singular values of `U U^h` (squares of those of `U`)
/// above `RANK_THRESHOLD` times the largest one.
pub fn gram_rank(u: &CMatrix) -> usize {
    let s = singular_values(u);
    match s.first() {
        None => 0,
        Some(&0.0) => 0,
        Some(&smax) => s.iter().filter(|&&v| v * v > RANK_THRESHOLD * smax * smax).count(),
    }
}

/// Compress `U` (m x r) to `W_k Sigma_k` where `k` is the numerical rank of `U U^h`.
/// `U U^h` is preserved up to the discarded singular values.
pub fn truncate_factor(u: &CMatrix) -> CMatrix {
    let rank = gram_rank(u);
    if rank == 0 {
        return CMatrix::zeros(u.nrows(), 0);
    }
    let svd = SVD::new(u.clone(), true, false);
    let w = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut out = CMatrix::zeros(u.nrows(), rank);
    for (c, &j) in order.iter().take(rank).enumerate() {
        let s = svd.singular_values[j];
        out.set_column(c, &(w.column(j) * Complex64::new(s, 0.0)));
    }
    out
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMatrix::zeros(m.nrows(), m.ncols());
    for (c, &i) in order.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Frobenius inner product `<A, B> = tr(A^h B)`.
pub fn frobenius_dot(a: &CMatrix, b: &CMatrix) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// `<a, b> = a^h b`.
pub fn dot(a: &CVector, b: &CVector) -> Complex64 {
    a.dotc(b)
}

pub fn norm_sqr(v: &CVector) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}
