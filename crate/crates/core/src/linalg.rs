//! Small dense complex linear-algebra helpers on top of nalgebra.
//!
//! Everything in the toolkit works with dynamically sized complex matrices;
//! fibers are small (at most a few dozen dimensions), so plain SVD and
//! Hermitian eigendecompositions are used throughout.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Relative singular-value threshold used for numerical rank and nullspaces.
pub const RANK_RTOL: f64 = 1e-10;

#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Singular values in descending order. Empty matrices have none.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let svd = m.clone().svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Spectral (operator) norm.
pub fn op_norm(m: &CMatrix) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Smallest singular value of a square or tall matrix; zero when the matrix
/// is wide (it then has a nontrivial kernel).
pub fn sigma_min(m: &CMatrix) -> f64 {
    if m.ncols() == 0 {
        return f64::INFINITY;
    }
    if m.nrows() < m.ncols() {
        return 0.0;
    }
    singular_values(m).last().copied().unwrap_or(0.0)
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Orthonormal basis (as columns) of the kernel of `m`, using the relative
/// threshold `sigma <= rtol * sigma_max`. A zero matrix has the whole space
/// as kernel.
pub fn nullspace(m: &CMatrix, rtol: f64) -> CMatrix {
    let n = m.ncols();
    if n == 0 {
        return CMatrix::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return identity(n);
    }
    // Pad with zero rows so that the thin SVD carries a full right basis.
    let rows = m.nrows().max(n);
    let mut padded = CMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let s = &svd.singular_values;
    let smax = s.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..s.len())
        .filter(|&i| smax == 0.0 || s[i] <= rtol * smax)
        .collect();
    let mut basis = CMatrix::zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        for r in 0..n {
            basis[(r, c)] = v_t[(i, r)].conj();
        }
    }
    basis
}

/// Numerical column rank with relative threshold.
pub fn rank(m: &CMatrix, rtol: f64) -> usize {
    let s = singular_values(m);
    let Some(&smax) = s.first() else { return 0 };
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > rtol * smax).count()
}

/// Orthonormal basis of the column space (left singular vectors above the
/// relative threshold).
pub fn range_basis(m: &CMatrix, rtol: f64) -> CMatrix {
    if m.nrows() == 0 || m.ncols() == 0 {
        return CMatrix::zeros(m.nrows(), 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let s = &svd.singular_values;
    let smax = s.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return CMatrix::zeros(m.nrows(), 0);
    }
    let keep: Vec<usize> = (0..s.len()).filter(|&i| s[i] > rtol * smax).collect();
    let mut basis = CMatrix::zeros(m.nrows(), keep.len());
    for (c, &i) in keep.iter().enumerate() {
        basis.set_column(c, &u.column(i));
    }
    basis
}

/// Modified Gram-Schmidt with one reorthogonalization pass. Columns whose
/// residual falls below `rtol` times their original norm are dropped.
pub fn gram_schmidt(m: &CMatrix, rtol: f64) -> CMatrix {
    let mut out: Vec<CVector> = Vec::new();
    for col in m.column_iter() {
        let orig = col.norm();
        if orig == 0.0 {
            continue;
        }
        let mut v: CVector = col.into_owned();
        for _ in 0..2 {
            for q in &out {
                let proj = q.dotc(&v);
                v -= q * proj;
            }
        }
        let r = v.norm();
        if r > rtol * orig {
            out.push(v / Complex64::from(r));
        }
    }
    let mut basis = CMatrix::zeros(m.nrows(), out.len());
    for (c, q) in out.iter().enumerate() {
        basis.set_column(c, q);
    }
    basis
}

/// Hermitian part `(m + m*) / 2`.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::from(0.5)
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues ascending and
/// matching eigenvector columns.
pub fn hermitian_eig(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let eig = nalgebra::SymmetricEigen::new(hermitize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    hermitian_eig(m).0
}

/// Applies a real function to the spectrum of a Hermitian matrix.
pub fn hermitian_fn(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (vals, vecs) = hermitian_eig(m);
    let n = vals.len();
    let mut scaled = vecs.clone();
    for c in 0..n {
        let fc = Complex64::from(f(vals[c]));
        for r in 0..n {
            scaled[(r, c)] *= fc;
        }
    }
    scaled * vecs.adjoint()
}

/// Principal square root of a positive semidefinite Hermitian matrix.
pub fn hermitian_sqrt(m: &CMatrix) -> CMatrix {
    hermitian_fn(m, |x| x.max(0.0).sqrt())
}

/// Inverse of a Hermitian positive-definite matrix, falling back to LU when
/// Cholesky fails; the result is re-symmetrized.
pub fn hermitian_inverse(m: &CMatrix) -> Option<CMatrix> {
    let h = hermitize(m);
    let inv = match h.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => h.try_inverse()?,
    };
    Some(hermitize(&inv))
}

/// Unitary factor of the polar decomposition `m = U P` together with the
/// condition ratio `sigma_min / sigma_max`.
pub fn polar_unitary(m: &CMatrix) -> (CMatrix, f64) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let s = &svd.singular_values;
    let smax = s.iter().copied().fold(0.0, f64::max);
    let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    (u * v_t, ratio)
}

/// `max |<a_i, b_j>|` over orthonormal columns of two bases.
pub fn max_cross_inner(a: &CMatrix, b: &CMatrix) -> f64 {
    if a.ncols() == 0 || b.ncols() == 0 {
        return 0.0;
    }
    max_abs(&(a.adjoint() * b))
}

/// Block-diagonal assembly.
pub fn block_diag(blocks: &[CMatrix]) -> CMatrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMatrix::zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r0, c0), (b.nrows(), b.ncols())).copy_from(b);
        r0 += b.nrows();
        c0 += b.ncols();
    }
    out
}
