//! Seeded random matrices and families for experiments and tests.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::lattice::TruncationBox;
use crate::linalg::{self, c64, CMatrix, CVector};
use crate::weights::{FiberMap, WeightFamily};

/// Deterministic generator for `(seed, stream)`; distinct streams never
/// overlap.
pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Complex matrix with independent standard normal real and imaginary parts.
pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| c64(normal(rng), normal(rng)))
}

pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| c64(normal(rng), normal(rng)))
}

/// Haar-distributed unitary via QR with the phase correction on `R`.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    let qr = gaussian_matrix(rng, n, n).qr();
    let q = qr.q();
    let r = qr.r();
    let mut u = q.clone();
    for c in 0..n {
        let d = r[(c, c)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c64(1.0, 0.0) };
        for i in 0..n {
            u[(i, c)] *= phase;
        }
    }
    u
}

/// `U diag(s) V` with singular values drawn uniformly from `[lo, hi]`.
pub fn random_well_conditioned<R: Rng + ?Sized>(rng: &mut R, n: usize, lo: f64, hi: f64) -> CMatrix {
    let u = random_unitary(rng, n);
    let v = random_unitary(rng, n);
    let s = CVector::from_fn(n, |_, _| c64(rng.random_range(lo..=hi), 0.0));
    u * CMatrix::from_diagonal(&s) * v
}

/// A random commuting family with invertible weights, built as
/// `A^(j)_alpha = B_{alpha+e_j} B_alpha^{-1}` from random well-conditioned
/// `B_alpha` with `B_0 = I`.
pub fn random_commuting_family<R: Rng + ?Sized>(rng: &mut R, d: usize, n: usize, cap: usize) -> WeightFamily {
    let bx = TruncationBox::new(d, cap).expect("valid box");
    let pts = bx.enumerate();
    let bs: Vec<CMatrix> = pts
        .iter()
        .map(|a| {
            if a.is_zero() {
                linalg::identity(n)
            } else {
                random_well_conditioned(rng, n, 0.5, 2.0)
            }
        })
        .collect();
    let invs: Vec<CMatrix> = bs.iter().map(|b| b.clone().try_inverse().expect("invertible")).collect();
    WeightFamily::from_fn(bx, FiberMap::constant(n), |j, a| {
        let r = bx.rank(a).expect("in box");
        let up = bx.rank(&a.add_unit(j)).expect("in box");
        &bs[up] * &invs[r]
    })
    .expect("shapes agree")
}

/// A uniformly random point of the d-torus.
pub fn random_torus_point<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<Complex64> {
    (0..d)
        .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unitary_is_unitary() {
        let mut r = rng(7, 0);
        let u = random_unitary(&mut r, 4);
        assert!(linalg::frobenius(&(u.adjoint() * &u - linalg::identity(4))) < 1e-13);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = gaussian_matrix(&mut rng(1, 3), 2, 2);
        let b = gaussian_matrix(&mut rng(1, 3), 2, 2);
        let c = gaussian_matrix(&mut rng(1, 4), 2, 2);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn random_family_commutes_and_is_invertible() {
        let fam = random_commuting_family(&mut rng(42, 0), 2, 3, 4);
        assert!(fam.check_commuting(1e-10).commuting);
        assert!(fam.check_invertible(1e-12).unwrap().invertible);
    }
}
