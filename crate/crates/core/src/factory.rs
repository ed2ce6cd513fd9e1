//! Concrete weight families and contraction classifiers for families of the
//! form `A^(j)_alpha = w^(j)_alpha Phi(|alpha|)`.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{MultiIndex, TruncationBox};
use crate::linalg::{self, c64, CMatrix, CVector};
use crate::weights::{FiberMap, WeightFamily};

type ScalarWeights = Box<dyn Fn(usize, &MultiIndex) -> Complex64 + Send + Sync>;
type PhiMap = Box<dyn Fn(usize) -> CMatrix + Send + Sync>;

/// Scalar weights `w^(j)_alpha` together with a matrix sequence `Phi(n)`.
pub struct ScalarPhiSpec {
    pub d: usize,
    pub n: usize,
    pub w: ScalarWeights,
    pub phi: PhiMap,
}

impl ScalarPhiSpec {
    pub fn new(
        d: usize,
        n: usize,
        w: impl Fn(usize, &MultiIndex) -> Complex64 + Send + Sync + 'static,
        phi: impl Fn(usize) -> CMatrix + Send + Sync + 'static,
    ) -> Self {
        ScalarPhiSpec {
            d,
            n,
            w: Box::new(w),
            phi: Box::new(phi),
        }
    }

    /// Largest relative defect of `w^(j)_{a+e_i} w^(i)_a = w^(i)_{a+e_j} w^(j)_a`
    /// over `|a| <= N-2`, with its witness.
    pub fn scalar_defect(&self, bx: &TruncationBox) -> (f64, Option<(MultiIndex, usize, usize)>) {
        let mut worst = 0.0;
        let mut at = None;
        if bx.cap() < 2 {
            return (worst, at);
        }
        for a in bx.enumerate().into_iter().take(bx.count_up_to(bx.cap() - 2)) {
            for i in 0..self.d {
                for j in (i + 1)..self.d {
                    let lhs = (self.w)(j, &a.add_unit(i)) * (self.w)(i, &a);
                    let rhs = (self.w)(i, &a.add_unit(j)) * (self.w)(j, &a);
                    let r = (lhs - rhs).norm() / lhs.norm().max(1.0);
                    if r > worst {
                        worst = r;
                        at = Some((a.clone(), i, j));
                    }
                }
            }
        }
        (worst, at)
    }
}

/// `A^(j)_alpha = w^(j)_alpha Phi(|alpha|)` on the box.
pub fn generate(spec: &ScalarPhiSpec, bx: TruncationBox, tol: f64) -> Result<WeightFamily> {
    if spec.d != bx.dim() {
        return Err(Error::Spec(format!("spec has d={} but the box has d={}", spec.d, bx.dim())));
    }
    let (worst, at) = spec.scalar_defect(&bx);
    if worst > tol {
        let (a, i, j) = at.expect("witness");
        return Err(Error::Spec(format!(
            "scalar weights do not commute at alpha={a}, axes ({}, {}): defect {worst:e}",
            i + 1,
            j + 1
        )));
    }
    for k in 0..bx.cap() {
        let p = (spec.phi)(k);
        if p.nrows() != spec.n || p.ncols() != spec.n {
            return Err(Error::Spec(format!("Phi({k}) is {}x{}, expected {}x{}", p.nrows(), p.ncols(), spec.n, spec.n)));
        }
    }
    WeightFamily::from_fn(bx, FiberMap::constant(spec.n), |j, a| {
        (spec.phi)(a.degree()) * (spec.w)(j, a)
    })
}

fn real_mat(rows: usize, cols: usize, data: &[f64]) -> CMatrix {
    CMatrix::from_row_iterator(rows, cols, data.iter().map(|&x| c64(x, 0.0)))
}

/// `[[p + q, p - q], [p - q, p + q]]`.
fn sym_pair(p: f64, q: f64) -> CMatrix {
    real_mat(2, 2, &[p + q, p - q, p - q, p + q])
}

/// `Phi(n)` of the row-contraction example: `phi(n) = sqrt((n+2)/(n+3))`,
/// `psi(n) = sqrt(n/(n+1))` for `n >= 1`, with `phi(0) = 1/sqrt(3)` and
/// `psi(0) = 1`.
pub fn example33_phi(n: usize) -> CMatrix {
    if n == 0 {
        return sym_pair(1.0 / 3f64.sqrt(), 1.0);
    }
    let k = n as f64;
    sym_pair(((k + 2.0) / (k + 3.0)).sqrt(), (k / (k + 1.0)).sqrt())
}

/// `w^(j)_alpha = sqrt((alpha_j + 1)/(|alpha| + 1)) / 2`.
pub fn example33_w(j: usize, a: &MultiIndex) -> Complex64 {
    c64(0.5 * ((a.get(j) as f64 + 1.0) / (a.degree() as f64 + 1.0)).sqrt(), 0.0)
}

pub fn example33_spec(d: usize) -> ScalarPhiSpec {
    ScalarPhiSpec::new(d, 2, example33_w, example33_phi)
}

/// The 2x2 family that is a row contraction for every `d` and a joint
/// contraction only for `d = 1`.
pub fn example33(d: usize, cap: usize) -> Result<WeightFamily> {
    generate(&example33_spec(d), TruncationBox::new(d, cap)?, 1e-12)
}

/// `A^(j)_0 = [[sqrt3 + 1, 1 - sqrt3], [1 - sqrt3, sqrt3 + 1]] / (2 sqrt3)`.
pub fn example33_a0() -> CMatrix {
    let s = 3f64.sqrt();
    real_mat(2, 2, &[s + 1.0, 1.0 - s, 1.0 - s, s + 1.0]) / c64(2.0 * s, 0.0)
}

/// Constant scalar weight `c` on every axis.
pub fn classical(d: usize, cap: usize, c: Complex64) -> Result<WeightFamily> {
    WeightFamily::constant(TruncationBox::new(d, cap)?, &CMatrix::from_element(1, 1, c))
}

/// Constant diagonal weight `diag(entries)` on every axis.
pub fn diagonal(d: usize, cap: usize, entries: &[Complex64]) -> Result<WeightFamily> {
    if entries.is_empty() || entries.iter().any(|z| z.norm() == 0.0) {
        return Err(Error::Spec("diagonal entries must be nonzero".into()));
    }
    let m = CMatrix::from_diagonal(&CVector::from_column_slice(entries));
    WeightFamily::constant(TruncationBox::new(d, cap)?, &m)
}

/// Constant weight `diag(a, b)`.
pub fn diag_powers(d: usize, cap: usize, a: f64, b: f64) -> Result<WeightFamily> {
    diagonal(d, cap, &[c64(a, 0.0), c64(b, 0.0)])
}

/// How weights are derived from a sequence `B_alpha`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// `A^(j)_alpha = B_alpha B_{alpha+e_j}^{-1}`.
    AsPrinted,
    /// `A^(j)_alpha = B_{alpha+e_j} B_alpha^{-1}`.
    Model,
}

/// `B_alpha = sqrt(|alpha|!/alpha!) [[|alpha|+1, 1], [1, |alpha|+1]]^{1/2}`,
/// `B_0 = I`, via the Hermitian square root.
pub fn remark34_b(a: &MultiIndex) -> CMatrix {
    if a.is_zero() {
        return linalg::identity(2);
    }
    let n = a.degree() as f64;
    let m = real_mat(2, 2, &[n + 1.0, 1.0, 1.0, n + 1.0]);
    linalg::hermitian_sqrt(&m) * c64(a.multinomial().sqrt(), 0.0)
}

/// Closed form of the same square root.
pub fn remark34_b_closed(a: &MultiIndex) -> CMatrix {
    if a.is_zero() {
        return linalg::identity(2);
    }
    let n = a.degree() as f64;
    let (p, q) = ((n + 2.0).sqrt(), n.sqrt());
    real_mat(2, 2, &[p + q, p - q, p - q, p + q]) * c64(0.5 * a.multinomial().sqrt(), 0.0)
}

/// The sequence `B_alpha` (indexed by graded rank) and the weights derived
/// from it under `convention`.
pub fn remark34_family(d: usize, cap: usize, convention: Convention) -> Result<(Vec<CMatrix>, WeightFamily)> {
    let bx = TruncationBox::new(d, cap)?;
    let bs: Vec<CMatrix> = bx.enumerate().iter().map(remark34_b).collect();
    let invs: Vec<CMatrix> = bs
        .iter()
        .map(|b| linalg::hermitian_inverse(b).expect("positive definite"))
        .collect();
    let fam = WeightFamily::from_fn(bx, FiberMap::constant(2), |j, a| {
        let r = bx.rank(a).expect("in box");
        let up = bx.rank(&a.add_unit(j)).expect("in box");
        match convention {
            Convention::AsPrinted => &bs[r] * &invs[up],
            Convention::Model => &bs[up] * &invs[r],
        }
    })?;
    Ok((bs, fam))
}

/// One contraction-type condition evaluated over the box.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionReport {
    pub holds: bool,
    /// The norm-product path and the direct operator path agree everywhere.
    pub paths_agree: bool,
    /// Every index where the condition fails, with the norm-product value.
    pub violations: Vec<(MultiIndex, f64)>,
    /// Extreme value over the box (max for contractions, min for expansion).
    pub extreme: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Classification {
    pub joint_contraction: ConditionReport,
    pub row_contraction: ConditionReport,
    pub joint_expansion: ConditionReport,
}

const STRICT_TOL: f64 = 1e-12;
const AGREE_TOL: f64 = 1e-10;

fn finish(entries: Vec<(MultiIndex, f64, f64)>, expansion: bool) -> ConditionReport {
    let mut violations = Vec::new();
    let mut paths_agree = true;
    let mut extreme = if expansion { f64::INFINITY } else { 0.0 };
    for (a, norm_val, op_val) in entries {
        if (norm_val - op_val).abs() > AGREE_TOL * norm_val.abs().max(1.0) {
            paths_agree = false;
        }
        let fails = if expansion {
            extreme = f64::min(extreme, norm_val);
            norm_val < 1.0 - STRICT_TOL
        } else {
            extreme = f64::max(extreme, norm_val);
            norm_val > 1.0 + STRICT_TOL
        };
        let op_fails = if expansion { op_val < 1.0 - STRICT_TOL } else { op_val > 1.0 + STRICT_TOL };
        if fails != op_fails {
            paths_agree = false;
        }
        if fails {
            violations.push((a, norm_val));
        }
    }
    ConditionReport {
        holds: violations.is_empty(),
        paths_agree,
        violations,
        extreme,
    }
}

/// Evaluates joint/row contraction and joint expansion both through the
/// norm products `||w_alpha|| ||Phi(|alpha|)||` (and their variants) and
/// through the operator sums of the generated weights.
pub fn classify(spec: &ScalarPhiSpec, cap: usize) -> Result<Classification> {
    let bx = TruncationBox::new(spec.d, cap)?;
    let fam = generate(spec, bx, 1e-10)?;
    let pts = bx.enumerate();
    let n = spec.n;
    let mut joint = Vec::new();
    let mut expand = Vec::new();
    let mut row = Vec::new();
    for a in &pts {
        let k = a.degree();
        if k < cap {
            let wn = (0..spec.d).map(|j| (spec.w)(j, a).norm_sqr()).sum::<f64>().sqrt();
            let phi = (spec.phi)(k);
            let mut sum = CMatrix::zeros(n, n);
            for j in 0..spec.d {
                let w = fam.weight(j, a);
                sum += w.adjoint() * w;
            }
            let eig = linalg::hermitian_eigenvalues(&sum);
            let lmax = eig.last().copied().unwrap_or(0.0).max(0.0);
            let lmin = eig.first().copied().unwrap_or(0.0).max(0.0);
            joint.push((a.clone(), wn * linalg::op_norm(&phi), lmax.sqrt()));
            expand.push((a.clone(), wn * linalg::sigma_min(&phi), lmin.sqrt()));
        }
        if k >= 1 {
            let wt = (0..spec.d)
                .filter_map(|j| a.sub_unit(j).map(|p| (spec.w)(j, &p).norm_sqr()))
                .sum::<f64>()
                .sqrt();
            let phi = (spec.phi)(k - 1);
            let mut sum = CMatrix::zeros(n, n);
            for j in 0..spec.d {
                if let Some(p) = a.sub_unit(j) {
                    let w = fam.weight(j, &p);
                    sum += w * w.adjoint();
                }
            }
            let lmax = linalg::hermitian_eigenvalues(&sum).last().copied().unwrap_or(0.0).max(0.0);
            row.push((a.clone(), wt * linalg::op_norm(&phi), lmax.sqrt()));
        }
    }
    Ok(Classification {
        joint_contraction: finish(joint, false),
        row_contraction: finish(row, false),
        joint_expansion: finish(expand, true),
    })
}
