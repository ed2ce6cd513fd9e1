//! The truncated shift tuple: action, adjoints, moment operators, dense
//! assembly, normality and the joint kernel of the adjoints.
//!
//! `T_j` maps block `alpha` to block `alpha + e_j`; anything pushed beyond
//! the top layer `|alpha| = N` is dropped.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::MultiIndex;
use crate::linalg::{self, CMatrix, CVector};
use crate::weights::WeightFamily;

/// A block vector `(x_alpha)` over the box, indexed by graded rank.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedVector {
    blocks: Vec<CVector>,
}

impl TruncatedVector {
    pub fn zeros(fam: &WeightFamily) -> Self {
        TruncatedVector {
            blocks: fam.fiber_dims().iter().map(|&n| CVector::zeros(n)).collect(),
        }
    }

    /// A vector supported on the single block `alpha`.
    pub fn concentrated(fam: &WeightFamily, alpha: &MultiIndex, x: CVector) -> Self {
        let mut v = Self::zeros(fam);
        assert_eq!(x.len(), fam.fiber_dim(alpha));
        v.blocks[fam.rank(alpha)] = x;
        v
    }

    pub fn from_flat(fam: &WeightFamily, flat: &CVector) -> Self {
        assert_eq!(flat.len(), fam.total_dim());
        let blocks = fam
            .fiber_dims()
            .iter()
            .enumerate()
            .map(|(r, &n)| flat.rows(fam.offset_by_rank(r), n).into_owned())
            .collect();
        TruncatedVector { blocks }
    }

    pub fn to_flat(&self) -> CVector {
        let total = self.blocks.iter().map(|b| b.len()).sum();
        let mut out = CVector::zeros(total);
        let mut off = 0;
        for b in &self.blocks {
            out.rows_mut(off, b.len()).copy_from(b);
            off += b.len();
        }
        out
    }

    pub fn block(&self, r: usize) -> &CVector {
        &self.blocks[r]
    }

    pub fn block_mut(&mut self, r: usize) -> &mut CVector {
        &mut self.blocks[r]
    }

    pub fn blocks(&self) -> &[CVector] {
        &self.blocks
    }

    pub fn norm(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt()
    }

    /// Largest block-norm difference restricted to ranks where `keep` holds.
    pub fn max_block_diff(&self, other: &Self, mut keep: impl FnMut(usize) -> bool) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .enumerate()
            .filter(|(r, _)| keep(*r))
            .map(|(_, (a, b))| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// `T_j x`: block `alpha` becomes `A^(j)_{alpha-e_j} x_{alpha-e_j}`.
pub fn apply_t(fam: &WeightFamily, j: usize, x: &TruncatedVector) -> TruncatedVector {
    let mut out = TruncatedVector::zeros(fam);
    for (r, alpha) in fam.points().iter().enumerate() {
        if let Some(src) = alpha.sub_unit(j) {
            out.blocks[r] = fam.weight(j, &src) * &x.blocks[fam.rank(&src)];
        }
    }
    out
}

/// `T_j^* x`: block `alpha` becomes `A^(j)*_alpha x_{alpha+e_j}`, zero on
/// the top layer.
pub fn apply_t_adjoint(fam: &WeightFamily, j: usize, x: &TruncatedVector) -> TruncatedVector {
    let mut out = TruncatedVector::zeros(fam);
    for (r, alpha) in fam.points().iter().enumerate() {
        if fam.has_weight(alpha) {
            let tgt = fam.rank(&alpha.add_unit(j));
            out.blocks[r] = fam.weight(j, alpha).adjoint() * &x.blocks[tgt];
        }
    }
    out
}

/// `B(alpha, beta) : H_{alpha-beta} -> H_alpha`, the ordered product
/// `A^(1)(alpha, beta_1) A^(2)(alpha - beta_1 e_1, beta_2) ...`.
pub fn moment_b(fam: &WeightFamily, alpha: &MultiIndex, beta: &MultiIndex) -> Result<CMatrix> {
    if !fam.truncation().contains(alpha) {
        return Err(Error::Domain(format!("{alpha} lies outside the box")));
    }
    let Some(mut at) = alpha.checked_sub(beta) else {
        return Err(Error::Domain(format!("{beta} is not below {alpha}")));
    };
    let mut m = linalg::identity(fam.fiber_dim(&at));
    for j in (0..fam.dim()).rev() {
        for _ in 0..beta.get(j) {
            m = fam.weight(j, &at) * m;
            at = at.add_unit(j);
        }
    }
    Ok(m)
}

/// `C(alpha, beta) : H_{alpha+beta} -> H_alpha`, the ordered product of
/// adjoint weights `C^(1)(alpha, beta_1) C^(2)(alpha + beta_1 e_1, beta_2) ...`.
pub fn moment_c(fam: &WeightFamily, alpha: &MultiIndex, beta: &MultiIndex) -> Result<CMatrix> {
    let top = alpha.add(beta);
    if !fam.truncation().contains(&top) {
        return Err(Error::Domain(format!("{alpha} + {beta} lies outside the box")));
    }
    let mut m = linalg::identity(fam.fiber_dim(alpha));
    let mut at = alpha.clone();
    for j in 0..fam.dim() {
        for _ in 0..beta.get(j) {
            m *= fam.weight(j, &at).adjoint();
            at = at.add_unit(j);
        }
    }
    Ok(m)
}

/// `B_alpha = B(alpha, alpha) : H_0 -> H_alpha`.
pub fn moment_b_alpha(fam: &WeightFamily, alpha: &MultiIndex) -> CMatrix {
    moment_b(fam, alpha, alpha).expect("alpha is in the box")
}

/// `G_alpha = B_alpha^* B_alpha`, Hermitian-symmetrized.
pub fn gram_g(fam: &WeightFamily, alpha: &MultiIndex) -> CMatrix {
    let b = moment_b_alpha(fam, alpha);
    linalg::hermitize(&(b.adjoint() * b))
}

/// `T^beta x` by the moment formula: block `alpha` is `B(alpha, beta) x_{alpha-beta}`.
pub fn apply_t_power(fam: &WeightFamily, beta: &MultiIndex, x: &TruncatedVector) -> TruncatedVector {
    let mut out = TruncatedVector::zeros(fam);
    for (r, alpha) in fam.points().iter().enumerate() {
        if let Some(src) = alpha.checked_sub(beta) {
            let b = moment_b(fam, alpha, beta).expect("beta below alpha");
            out.blocks[r] = b * &x.blocks[fam.rank(&src)];
        }
    }
    out
}

/// `T*^beta x` by the moment formula: block `alpha` is `C(alpha, beta) x_{alpha+beta}`
/// whenever `|alpha + beta| <= N`.
pub fn apply_t_adjoint_power(fam: &WeightFamily, beta: &MultiIndex, x: &TruncatedVector) -> TruncatedVector {
    let mut out = TruncatedVector::zeros(fam);
    for (r, alpha) in fam.points().iter().enumerate() {
        let top = alpha.add(beta);
        if fam.truncation().contains(&top) {
            let c = moment_c(fam, alpha, beta).expect("in box");
            out.blocks[r] = c * &x.blocks[fam.rank(&top)];
        }
    }
    out
}

/// Dense `D x D` matrix of `T_j` in graded block order.
pub fn assemble_matrix(fam: &WeightFamily, j: usize) -> CMatrix {
    let dim = fam.total_dim();
    let mut m = CMatrix::zeros(dim, dim);
    for alpha in fam.points() {
        if fam.has_weight(&alpha) {
            let w = fam.weight(j, &alpha);
            let r0 = fam.offset(&alpha.add_unit(j));
            let c0 = fam.offset(&alpha);
            m.view_mut((r0, c0), (w.nrows(), w.ncols())).copy_from(w);
        }
    }
    m
}

/// Result of the normality recursion check on one axis.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct NormalityVerdict {
    /// `T_j` is normal, which on this tuple means every `A^(j)_alpha` is zero.
    pub normal: bool,
    /// First index where `A*_alpha A_alpha = A_{alpha-e_j} A*_{alpha-e_j}` fails.
    pub witness: Option<MultiIndex>,
    pub residual: f64,
}

/// Checks `A^(j)*_alpha A^(j)_alpha = A^(j)_{alpha-e_j} A^(j)*_{alpha-e_j}` over
/// the stored weights. Starting from `alpha_j = 0` the recursion forces
/// every weight to vanish, so the verdict is "zero" exactly when it holds.
pub fn normality_verdict(fam: &WeightFamily, j: usize, tol: f64) -> NormalityVerdict {
    let mut witness = None;
    let mut residual = 0.0;
    for alpha in fam.points() {
        if !fam.has_weight(&alpha) {
            break;
        }
        let a = fam.weight(j, &alpha);
        let lhs = a.adjoint() * a;
        let rhs = match alpha.sub_unit(j) {
            Some(prev) => {
                let p = fam.weight(j, &prev);
                p * p.adjoint()
            }
            None => CMatrix::zeros(lhs.nrows(), lhs.ncols()),
        };
        let r = if lhs.shape() == rhs.shape() {
            linalg::op_norm(&(lhs - rhs))
        } else {
            // Fibers of different size cannot satisfy the recursion unless
            // both sides vanish.
            linalg::op_norm(&lhs).max(linalg::op_norm(&rhs))
        };
        if r > tol && witness.is_none() {
            witness = Some(alpha.clone());
            residual = r;
        }
    }
    let all_zero = fam
        .weights_on_axis(j)
        .iter()
        .all(|m| m.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    NormalityVerdict {
        normal: witness.is_none() && all_zero,
        witness,
        residual,
    }
}

/// Orthonormal bases of `ker T^*` per block: the whole fiber at `alpha = 0`,
/// and the joint kernel of the stacked `A^(j)*_{alpha-e_j}` elsewhere.
pub fn kernel_of_adjoint(fam: &WeightFamily, rtol: f64) -> Vec<CMatrix> {
    fam.points()
        .iter()
        .map(|alpha| {
            let n = fam.fiber_dim(alpha);
            let preds: Vec<(usize, MultiIndex)> =
                (0..fam.dim()).filter_map(|j| alpha.sub_unit(j).map(|p| (j, p))).collect();
            if preds.is_empty() {
                return linalg::identity(n);
            }
            let rows: usize = preds.iter().map(|(_, p)| fam.fiber_dim(p)).sum();
            let mut stack = CMatrix::zeros(rows, n);
            let mut r0 = 0;
            for (j, p) in &preds {
                let a = fam.weight(*j, p).adjoint();
                stack.view_mut((r0, 0), (a.nrows(), n)).copy_from(&a);
                r0 += a.nrows();
            }
            linalg::nullspace(&stack, rtol)
        })
        .collect()
}

/// Embeds per-block column bases into flat `D`-dimensional columns.
pub fn flatten_block_bases(fam: &WeightFamily, bases: &[CMatrix]) -> CMatrix {
    let cols: usize = bases.iter().map(|b| b.ncols()).sum();
    let mut out = CMatrix::zeros(fam.total_dim(), cols);
    let mut c0 = 0;
    for (r, b) in bases.iter().enumerate() {
        out.view_mut((fam.offset_by_rank(r), c0), (b.nrows(), b.ncols())).copy_from(b);
        c0 += b.ncols();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::TruncationBox;
    use crate::linalg::c64;
    use crate::weights::FiberMap;

    fn ident_d1(cap: usize) -> WeightFamily {
        WeightFamily::constant(TruncationBox::new(1, cap).unwrap(), &linalg::identity(1)).unwrap()
    }

    #[test]
    fn identity_shift_moves_block_up() {
        let fam = ident_d1(3);
        let x = TruncatedVector::concentrated(&fam, &MultiIndex::new(vec![0]), CVector::from_element(1, c64(1.0, 0.0)));
        let y = apply_t(&fam, 0, &x);
        assert_eq!(y.block(1)[0], c64(1.0, 0.0));
        assert_eq!(y.norm(), 1.0);
        let back = apply_t_adjoint(&fam, 0, &y);
        assert_eq!(back, x);
        assert_eq!(apply_t_adjoint(&fam, 0, &x).norm(), 0.0);
    }

    #[test]
    fn identity_matrix_is_subdiagonal() {
        let m = assemble_matrix(&ident_d1(2), 0);
        let mut expect = CMatrix::zeros(3, 3);
        expect[(1, 0)] = c64(1.0, 0.0);
        expect[(2, 1)] = c64(1.0, 0.0);
        assert_eq!(m, expect);
    }

    #[test]
    fn diag_weights_scale_components() {
        let bx = TruncationBox::new(2, 3).unwrap();
        let w = CMatrix::from_diagonal(&CVector::from_vec(vec![c64(2.0, 0.0), c64(0.5, 0.0)]));
        let fam = WeightFamily::constant(bx, &w).unwrap();
        let alpha = MultiIndex::new(vec![1, 0]);
        let x = TruncatedVector::concentrated(&fam, &alpha, CVector::from_element(2, c64(1.0, 0.0)));
        let y = apply_t(&fam, 1, &x);
        let r = fam.rank(&alpha.add_unit(1));
        assert_eq!(y.block(r)[0], c64(2.0, 0.0));
        assert_eq!(y.block(r)[1], c64(0.5, 0.0));
        let g = gram_g(&fam, &MultiIndex::new(vec![2, 1]));
        assert!((g[(0, 0)].re - 64.0).abs() < 1e-12);
        assert!((g[(1, 1)].re - 1.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn moment_b_d1_is_weight_product() {
        let bx = TruncationBox::new(1, 4).unwrap();
        let fam = WeightFamily::from_fn(bx, FiberMap::constant(1), |_, a| {
            CMatrix::from_element(1, 1, c64(a.get(0) as f64 + 2.0, 0.0))
        })
        .unwrap();
        let b = moment_b(&fam, &MultiIndex::new(vec![4]), &MultiIndex::new(vec![2])).unwrap();
        assert_eq!(b[(0, 0)], c64(5.0 * 4.0, 0.0));
        let c = moment_c(&fam, &MultiIndex::new(vec![1]), &MultiIndex::new(vec![3])).unwrap();
        assert_eq!(c[(0, 0)], c64(3.0 * 4.0 * 5.0, 0.0));
        let i = moment_b(&fam, &MultiIndex::new(vec![3]), &MultiIndex::new(vec![0])).unwrap();
        assert_eq!(i, linalg::identity(1));
        assert!(moment_b(&fam, &MultiIndex::new(vec![1]), &MultiIndex::new(vec![2])).is_err());
        assert!(moment_c(&fam, &MultiIndex::new(vec![3]), &MultiIndex::new(vec![2])).is_err());
    }

    #[test]
    fn normality() {
        let bx = TruncationBox::new(2, 3).unwrap();
        let zero = WeightFamily::constant(bx, &CMatrix::zeros(2, 2)).unwrap();
        let v = normality_verdict(&zero, 0, 1e-12);
        assert!(v.normal && v.witness.is_none());
        let id = WeightFamily::constant(bx, &linalg::identity(2)).unwrap();
        let v = normality_verdict(&id, 1, 1e-12);
        assert!(!v.normal);
        assert_eq!(v.witness, Some(MultiIndex::zero(2)));
    }

    #[test]
    fn kernel_of_rank_one_weight() {
        let bx = TruncationBox::new(1, 2).unwrap();
        let r1 = CMatrix::from_row_slice(2, 2, &[c64(1.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0)]);
        let fam = WeightFamily::from_fn(bx, FiberMap::constant(2), |_, a| {
            if a.is_zero() { r1.clone() } else { linalg::identity(2) }
        })
        .unwrap();
        let k = kernel_of_adjoint(&fam, linalg::RANK_RTOL);
        assert_eq!(k.iter().map(|b| b.ncols()).collect::<Vec<_>>(), vec![2, 1, 0]);
    }
}
