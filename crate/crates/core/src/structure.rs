//! Circularity, the wandering subspace property, analyticity depths and the
//! left-invertible reduction, all at the level of the truncation.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{MultiIndex, TruncationBox};
use crate::linalg::{self, CMatrix};
use crate::shift;
use crate::weights::{FiberMap, WeightFamily};

/// Diagonal torus unitary `U_lambda` with phase `conj(lambda)^alpha` on block `alpha`.
pub fn circular_unitary(fam: &WeightFamily, lambda: &[Complex64]) -> Result<CMatrix> {
    if lambda.len() != fam.dim() {
        return Err(Error::Domain(format!("lambda has {} entries, expected {}", lambda.len(), fam.dim())));
    }
    if let Some(l) = lambda.iter().find(|l| (l.norm() - 1.0).abs() > 1e-12) {
        return Err(Error::Domain(format!("|lambda_j| = {} is not 1", l.norm())));
    }
    let conj: Vec<Complex64> = lambda.iter().map(|l| l.conj()).collect();
    let mut diag = Vec::with_capacity(fam.total_dim());
    for a in fam.points() {
        let phase = a.monomial(&conj);
        diag.extend(std::iter::repeat_n(phase, fam.fiber_dim(&a)));
    }
    Ok(CMatrix::from_diagonal(&linalg::CVector::from_vec(diag)))
}

/// `max_j ||U_lambda^* T_j U_lambda - lambda_j T_j||` on the assembled matrices.
pub fn circular_residual(fam: &WeightFamily, lambda: &[Complex64]) -> Result<f64> {
    let u = circular_unitary(fam, lambda)?;
    let ua = u.adjoint();
    let mut worst: f64 = 0.0;
    for (j, l) in lambda.iter().enumerate() {
        let t = shift::assemble_matrix(fam, j);
        let r = &ua * &t * &u - &t * *l;
        worst = worst.max(linalg::op_norm(&r));
    }
    Ok(worst)
}

/// Rank of the span of `T^alpha(ker T^*)` over the box, against `D`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WanderingReport {
    pub span_dim: usize,
    pub total_dim: usize,
}

impl WanderingReport {
    /// The wandering subspace property on the truncation.
    pub fn holds(&self) -> bool {
        self.span_dim == self.total_dim
    }
}

/// Flat columns `T^alpha k` for every kernel basis vector `k` at block
/// `gamma` and every `alpha` with `|gamma + alpha| <= N`.
pub fn wandering_images(fam: &WeightFamily, kernel: &[CMatrix]) -> CMatrix {
    let pts = fam.points();
    let mut cols: Vec<(usize, CMatrix)> = Vec::new();
    for (rg, gamma) in pts.iter().enumerate() {
        let k = &kernel[rg];
        if k.ncols() == 0 {
            continue;
        }
        for alpha in &pts {
            let eta = gamma.add(alpha);
            if !fam.truncation().contains(&eta) {
                continue;
            }
            let b = shift::moment_b(fam, &eta, alpha).expect("alpha below eta");
            cols.push((fam.offset(&eta), b * k));
        }
    }
    let total: usize = cols.iter().map(|(_, m)| m.ncols()).sum();
    let mut out = CMatrix::zeros(fam.total_dim(), total);
    let mut c0 = 0;
    for (r0, m) in cols {
        out.view_mut((r0, c0), (m.nrows(), m.ncols())).copy_from(&m);
        c0 += m.ncols();
    }
    out
}

/// Dimension of `span { T^alpha(ker T^*) : alpha in box }`; this is a
/// statement about the truncation only.
pub fn wandering_span_dim(fam: &WeightFamily, rtol: f64) -> WanderingReport {
    let kernel = shift::kernel_of_adjoint(fam, rtol);
    let images = wandering_images(fam, &kernel);
    WanderingReport {
        span_dim: linalg::rank(&images, rtol),
        total_dim: fam.total_dim(),
    }
}

/// `dim ran T_j^k` for `k = 0..=N`.
pub fn analytic_depth(fam: &WeightFamily, j: usize) -> Vec<usize> {
    let t = shift::assemble_matrix(fam, j);
    let mut p = linalg::identity(fam.total_dim());
    let mut out = Vec::with_capacity(fam.cap() + 1);
    for _ in 0..=fam.cap() {
        out.push(linalg::rank(&p, linalg::RANK_RTOL));
        p = &t * p;
    }
    out
}

/// A reduced family with invertible weights together with the isometries
/// `W_alpha : C^m -> H` (flat columns) realizing the equivalence.
#[derive(Clone, Debug)]
pub struct Reduction {
    pub family: WeightFamily,
    pub isometries: Vec<CMatrix>,
    /// `max ||T_j W_alpha - W_{alpha+e_j} A~^(j)_alpha||`.
    pub intertwining_residual: f64,
    pub min_sigma: f64,
    pub commuting_residual: f64,
}

#[derive(Clone, Debug)]
pub enum ReductionOutcome {
    Applied(Box<Reduction>),
    NotApplicable {
        reason: String,
        witness: Option<(MultiIndex, MultiIndex)>,
    },
}

impl ReductionOutcome {
    pub fn applied(&self) -> Option<&Reduction> {
        match self {
            ReductionOutcome::Applied(r) => Some(r),
            ReductionOutcome::NotApplicable { .. } => None,
        }
    }
}

/// Threshold on `max |<u, v>|` between orthonormalized image bases.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

/// Realizes a toral left-invertible family as one with invertible weights
/// on `C^m`, `m = dim ker T^*`, over the reduced cap `N - s` where `s` is
/// the top degree carrying kernel.
pub fn left_invertible_reduce(fam: &WeightFamily, tol: f64) -> ReductionOutcome {
    let pts = fam.points();
    for j in 0..fam.dim() {
        for (r, w) in fam.weights_on_axis(j).iter().enumerate() {
            if linalg::sigma_min(w) < tol {
                return ReductionOutcome::NotApplicable {
                    reason: format!("weight j={} at alpha={} is not bounded below by {tol:e}", j + 1, pts[r]),
                    witness: None,
                };
            }
        }
    }
    let kernel = shift::kernel_of_adjoint(fam, linalg::RANK_RTOL);
    let support: Vec<usize> = (0..pts.len()).filter(|&r| kernel[r].ncols() > 0).collect();
    let top = support.iter().map(|&r| pts[r].degree()).max().unwrap_or(0);
    if top >= fam.cap() {
        return ReductionOutcome::NotApplicable {
            reason: format!("kernel reaches degree {top}, leaving no room below the cap {}", fam.cap()),
            witness: None,
        };
    }

    // T^alpha(K) and T^beta(K) meet only inside common blocks eta.
    for eta in &pts {
        let mut images: Vec<(MultiIndex, CMatrix)> = Vec::new();
        for &rg in &support {
            let gamma = &pts[rg];
            if let Some(shift_by) = eta.checked_sub(gamma) {
                let b = shift::moment_b(fam, eta, &shift_by).expect("below");
                images.push((shift_by, linalg::range_basis(&(b * &kernel[rg]), linalg::RANK_RTOL)));
            }
        }
        for p in 0..images.len() {
            for q in (p + 1)..images.len() {
                let c = linalg::max_cross_inner(&images[p].1, &images[q].1);
                if c > ORTHOGONALITY_TOL {
                    return ReductionOutcome::NotApplicable {
                        reason: format!(
                            "T^{}(ker T*) and T^{}(ker T*) are not orthogonal in block {eta} (overlap {c:e})",
                            images[p].0, images[q].0
                        ),
                        witness: Some((images[p].0.clone(), images[q].0.clone())),
                    };
                }
            }
        }
    }

    let m: usize = kernel.iter().map(|k| k.ncols()).sum();
    let cap = fam.cap() - top;
    let small = TruncationBox::new(fam.dim(), cap).expect("cap >= 1");
    let mut isometries = Vec::new();
    for alpha in small.enumerate() {
        let mut cols = CMatrix::zeros(fam.total_dim(), m);
        let mut c0 = 0;
        for (rg, gamma) in pts.iter().enumerate() {
            let k = &kernel[rg];
            if k.ncols() == 0 {
                continue;
            }
            let eta = gamma.add(&alpha);
            let b = shift::moment_b(fam, &eta, &alpha).expect("in box");
            let img = b * k;
            cols.view_mut((fam.offset(&eta), c0), (img.nrows(), img.ncols())).copy_from(&img);
            c0 += k.ncols();
        }
        let w = linalg::gram_schmidt(&cols, 1e-12);
        if w.ncols() != m {
            return ReductionOutcome::NotApplicable {
                reason: format!("T^{alpha} is not injective on ker T*"),
                witness: None,
            };
        }
        isometries.push(w);
    }
    let mats: Vec<CMatrix> = (0..fam.dim()).map(|j| shift::assemble_matrix(fam, j)).collect();
    let mut residual: f64 = 0.0;
    let reduced = WeightFamily::from_fn(small, FiberMap::constant(m), |j, a| {
        let r = small.rank(a).expect("in box");
        let up = small.rank(&a.add_unit(j)).expect("in box");
        let tw = &mats[j] * &isometries[r];
        let at = isometries[up].adjoint() * &tw;
        residual = residual.max(linalg::op_norm(&(tw - &isometries[up] * &at)));
        at
    })
    .expect("constant fibers");
    let min_sigma = reduced
        .check_invertible(0.0)
        .map(|r| r.min_sigma)
        .unwrap_or(0.0);
    let commuting_residual = reduced.check_commuting(f64::INFINITY).worst_residual;
    ReductionOutcome::Applied(Box::new(Reduction {
        family: reduced,
        isometries,
        intertwining_residual: residual,
        min_sigma,
        commuting_residual,
    }))
}
