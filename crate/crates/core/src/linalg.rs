//! Small dense vector helpers on `&[f64]`.
//!
//! Matrix work (factorizations, SVD) goes through `nalgebra`; these cover
//! the hot loops where building a matrix would only add allocation.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// y += alpha * x
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(alpha: f64, a: &[f64]) -> Vec<f64> {
    a.iter().map(|x| alpha * x).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Matrix whose columns are the given vectors (all of length `n`).
pub fn columns_to_matrix(n: usize, cols: &[&[f64]]) -> DMatrix<f64> {
    DMatrix::from_fn(n, cols.len(), |r, c| cols[c][r])
}

/// Orthonormal basis (as columns) of the span of the columns of `m`.
///
/// Singular values at or below `rel_tol * σ_max` are treated as zero.
pub fn orthonormal_range(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = m.nrows();
    if m.ncols() == 0 || m.iter().all(|x| *x == 0.0) {
        return DMatrix::zeros(n, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > rel_tol * smax)
        .collect();
    DMatrix::from_fn(n, keep.len(), |r, c| u[(r, keep[c])])
}

/// Orthonormal basis of the null space of `m` (columns), using the SVD of
/// `m` padded to at least as many rows as columns.
pub fn null_space(m: &DMatrix<f64>, abs_tol: f64) -> DMatrix<f64> {
    let n = m.ncols();
    let padded = if m.nrows() < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] <= abs_tol)
        .collect();
    DMatrix::from_fn(n, keep.len(), |r, c| vt[(keep[c], r)])
}

/// Solve `g x = rhs` for symmetric positive definite `g`.
pub fn solve_spd(g: DMatrix<f64>, rhs: &[f64]) -> Option<Vec<f64>> {
    let chol = g.cholesky()?;
    let x = chol.solve(&DVector::from_column_slice(rhs));
    Some(x.iter().copied().collect())
}

/// Minimum-norm least-squares solution of `a x = b`.
pub fn lstsq_min_norm(a: &DMatrix<f64>, b: &[f64], rel_tol: f64) -> Vec<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = rel_tol * smax.max(f64::MIN_POSITIVE);
    let x = svd
        .solve(&DVector::from_column_slice(b), eps)
        .expect("U and V^T were computed");
    x.iter().copied().collect()
}
