//! Dense complex linear algebra helpers shared by the whole crate.
//!
//! Everything here wraps nalgebra on `DMatrix<Complex<f64>>`. Spans,
//! ranks, and least squares go through Hermitian eigendecompositions of
//! Gram matrices rather than nalgebra's complex SVD, which misfactors
//! some matrices with degenerate spectra (it can report a singular value
//! of 1.0095 for an exact rank-one orthogonal projector). Rank decisions
//! threshold Gram eigenvalues at [`RANK_TOL`] relative to the largest;
//! principal square roots clamp negative eigenvalues of nominally
//! positive semidefinite inputs to zero.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::ground::{bits, Mask};
use crate::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Gram eigenvalues at or below `RANK_TOL * max(1, largest)` are treated
/// as zero when deciding the rank of a span.
pub const RANK_TOL: f64 = 1e-8;

pub fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

/// Largest entry modulus, zero for empty matrices.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest modulus of `m[i][j] - conj(m[j][i])` over all entries.
pub fn hermitian_defect(m: &CMat) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5, 0.0)
}

/// Eigenvalues (ascending) and matching orthonormal eigenvector columns of
/// a Hermitian matrix. The input is symmetrized first so callers may pass
/// matrices with floating-point Hermitian defects.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let eig = hermitize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
    (values, vectors)
}

/// Smallest and largest eigenvalue of a Hermitian matrix.
pub fn eigen_range(m: &CMat) -> (f64, f64) {
    let (vals, _) = hermitian_eigen(m);
    match (vals.first(), vals.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => (0.0, 0.0),
    }
}

/// Principal square root of a Hermitian positive semidefinite matrix,
/// clamping slightly negative eigenvalues to zero.
pub fn psd_sqrt(m: &CMat) -> CMat {
    let (vals, vecs) = hermitian_eigen(m);
    let n = m.nrows();
    let mut scaled = vecs.clone();
    for k in 0..n {
        let root = vals[k].max(0.0).sqrt();
        for r in 0..n {
            scaled[(r, k)] *= c(root, 0.0);
        }
    }
    &scaled * vecs.adjoint()
}

/// Principal submatrix on the rows and columns in `mask`, ascending.
pub fn restrict(m: &CMat, mask: Mask) -> CMat {
    let idx: Vec<usize> = bits(mask).collect();
    CMat::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])])
}

/// Determinant of the inclusion-exclusion matrix for the cylinder event
/// "include every element of `include`, exclude every element of
/// `exclude`": rows and columns run over the union in ground order, and a
/// row for an excluded element `e` carries `delta[e][f] - Q[e][f]` in place
/// of `Q[e][f]`.
pub fn incexc_det(entries: &CMat, include: Mask, exclude: Mask) -> C64 {
    let idx: Vec<usize> = bits(include | exclude).collect();
    let k = idx.len();
    if k == 0 {
        return c(1.0, 0.0);
    }
    let m = CMat::from_fn(k, k, |r, col| {
        let (e, f) = (idx[r], idx[col]);
        if exclude & (1 << e) != 0 {
            let delta = if e == f { c(1.0, 0.0) } else { c(0.0, 0.0) };
            delta - entries[(e, f)]
        } else {
            entries[(e, f)]
        }
    });
    m.determinant()
}

/// Schur complement that removes the `pivots` block: on the remaining
/// indices `R`, returns `Q[R][R] - Q[R][P] Q[P][P]^-1 Q[P][R]`.
pub fn schur_complement(entries: &CMat, pivots: Mask) -> Result<CMat> {
    let n = entries.nrows();
    let piv: Vec<usize> = bits(pivots).collect();
    let rest: Vec<usize> = (0..n).filter(|i| pivots & (1 << i) == 0).collect();
    let qpp = CMat::from_fn(piv.len(), piv.len(), |r, c| entries[(piv[r], piv[c])]);
    let inv = qpp
        .try_inverse()
        .ok_or_else(|| Error::Singular("pivot block in Schur complement".into()))?;
    let qrp = CMat::from_fn(rest.len(), piv.len(), |r, c| entries[(rest[r], piv[c])]);
    let qpr = CMat::from_fn(piv.len(), rest.len(), |r, c| entries[(piv[r], rest[c])]);
    let qrr = CMat::from_fn(rest.len(), rest.len(), |r, c| entries[(rest[r], rest[c])]);
    Ok(qrr - qrp * inv * qpr)
}

/// Orthonormal basis for the column space of `m`: the eigenvectors of the
/// Gram matrix `m m*` whose eigenvalues clear the rank threshold.
pub fn orthonormal_columns(m: &CMat, tol: f64) -> CMat {
    let n = m.nrows();
    if m.ncols() == 0 || n == 0 {
        return CMat::zeros(n, 0);
    }
    let (vals, vecs) = hermitian_eigen(&(m * m.adjoint()));
    let floor = tol * vals.last().copied().unwrap_or(0.0).max(1.0);
    let rank = vals.iter().filter(|&&v| v > floor).count();
    vecs.columns(n - rank, rank).into_owned()
}

/// Orthonormal basis of the orthogonal complement of the column space of
/// an orthonormal `basis`.
pub fn complement_basis(basis: &CMat, tol: f64) -> CMat {
    let n = basis.nrows();
    let residual = CMat::identity(n, n) - basis * basis.adjoint();
    orthonormal_columns(&residual, tol)
}

/// Orthonormal basis of the sum of two column spaces.
pub fn sum_basis(a: &CMat, b: &CMat, tol: f64) -> CMat {
    let n = a.nrows();
    assert_eq!(n, b.nrows(), "subspace sum on mismatched dimensions");
    let mut stacked = CMat::zeros(n, a.ncols() + b.ncols());
    stacked.columns_mut(0, a.ncols()).copy_from(a);
    stacked.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    orthonormal_columns(&stacked, tol)
}

/// Orthonormal basis of the intersection of two column spaces, computed as
/// the complement of the sum of the complements.
pub fn intersect_basis(a: &CMat, b: &CMat, tol: f64) -> CMat {
    let ca = complement_basis(a, tol);
    let cb = complement_basis(b, tol);
    complement_basis(&sum_basis(&ca, &cb, tol), tol)
}

/// Columns of the identity matrix indexed by `mask`: an orthonormal basis
/// of the coordinate subspace.
pub fn coordinate_basis(n: usize, mask: Mask) -> CMat {
    let idx: Vec<usize> = bits(mask).collect();
    CMat::from_fn(n, idx.len(), |r, c| if r == idx[c] { C64::ONE } else { C64::ZERO })
}

/// Projection matrix `U U*` onto the column space of an orthonormal basis.
pub fn projection_matrix(basis: &CMat) -> CMat {
    basis * basis.adjoint()
}

/// Minimum-norm least-squares solution of `a x = b`, computed as
/// `(a* a)^+ a* b` through the Gram eigendecomposition.
pub fn least_squares(a: &CMat, b: &CVec) -> Result<CVec> {
    let k = a.ncols();
    if k == 0 {
        return Ok(CVec::zeros(0));
    }
    let (vals, vecs) = hermitian_eigen(&(a.adjoint() * a));
    let floor = RANK_TOL * vals.last().copied().unwrap_or(0.0).max(1.0);
    let rotated = vecs.adjoint() * (a.adjoint() * b);
    let mut scaled = CVec::zeros(k);
    for i in 0..k {
        if vals[i] > floor {
            scaled[i] = rotated[i] / c(vals[i], 0.0);
        }
    }
    Ok(&vecs * scaled)
}
