//! Thin helpers over nalgebra for complex Hermitian work.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use num_complex::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn real_mat(rows: usize, cols: usize, data: &[f64]) -> CMat {
    CMat::from_row_iterator(rows, cols, data.iter().map(|&x| c(x, 0.0)))
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// Numerical rank: singular values below `rel_tol * sigma_max` count as zero.
pub fn rank(m: &CMat, rel_tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        None => 0,
        Some(&0.0) => 0,
        Some(&top) => s.iter().filter(|&&x| x > rel_tol * top).count(),
    }
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = max_abs(m).max(1.0);
    max_abs(&(m - m.adjoint())) <= tol * scale
}

/// Eigenvalues ascending with matching eigenvector columns.
pub fn hermitian_eigen(m: &CMat, degree: usize) -> Result<(Vec<f64>, CMat)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((Vec::new(), CMat::zeros(0, 0)));
    }
    let sym = (m + m.adjoint()).scale(0.5);
    let eig = SymmetricEigen::try_new(sym, 1e-15, 10_000).ok_or_else(|| Error::Eigensolve {
        degree,
        detail: format!("no convergence for {n}x{n} Hermitian matrix"),
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
    Ok((values, vectors))
}

pub fn cholesky_lower(h: &CMat, degree: usize) -> Result<CMat> {
    if h.nrows() == 0 {
        return Ok(CMat::zeros(0, 0));
    }
    if !is_hermitian(h, 1e-12) {
        return Err(Error::NotPositive(degree));
    }
    let sym = (h + h.adjoint()).scale(0.5);
    Cholesky::new(sym)
        .map(|ch| ch.l())
        .ok_or(Error::NotPositive(degree))
}

/// log det of a Hermitian positive definite matrix.
pub fn log_det_hpd(h: &CMat, degree: usize) -> Result<f64> {
    let l = cholesky_lower(h, degree)?;
    Ok(2.0 * (0..l.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>())
}

/// Inverse of a lower triangular matrix.
pub fn lower_inverse(l: &CMat) -> CMat {
    let n = l.nrows();
    if n == 0 {
        return CMat::zeros(0, 0);
    }
    l.clone()
        .solve_lower_triangular(&CMat::identity(n, n))
        .expect("triangular factor with positive diagonal")
}

/// Pairwise summation, deterministic for a fixed slice.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Orthonormal basis (columns) of the column space of `m` using its SVD.
pub fn column_space(m: &CMat, rel_tol: f64) -> CMat {
    let r = rank(m, rel_tol);
    if r == 0 {
        return CMat::zeros(m.nrows(), 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap());
    CMat::from_fn(m.nrows(), r, |i, k| u[(i, idx[k])])
}
