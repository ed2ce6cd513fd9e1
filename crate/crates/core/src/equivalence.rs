//! Unitary equivalence of invertible-weight multishifts through their Gram
//! families: `T ~ T~` iff some unitary `U` has `U G_alpha = G~_alpha U` for all `alpha`.

use serde::Serialize;

use crate::analytic::{self, GramFamily};
use crate::error::{Error, Result};
use crate::lattice::MultiIndex;
use crate::linalg::{self, c64, CMatrix};
use crate::sampling;
use crate::shift;
use crate::weights::{self, WeightFamily};

/// Thresholds used by the decision pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EquivalenceOptions {
    pub budget: usize,
    pub seed: u64,
    pub spectra_rtol: f64,
    pub nullspace_rtol: f64,
    pub invertible_rtol: f64,
    pub unitarity_tol: f64,
    pub intertwining_tol: f64,
    pub block_tol: f64,
    pub tol_invert: f64,
    pub verify_intertwine: bool,
}

impl Default for EquivalenceOptions {
    fn default() -> Self {
        EquivalenceOptions {
            budget: 200,
            seed: 42,
            spectra_rtol: 1e-8,
            nullspace_rtol: 1e-10,
            invertible_rtol: 1e-8,
            unitarity_tol: 1e-10,
            intertwining_tol: 1e-9,
            block_tol: 1e-8,
            tol_invert: 1e-12,
            verify_intertwine: true,
        }
    }
}

/// Two Gram families on the same box and fiber.
#[derive(Clone, Debug)]
pub struct IntertwinerProblem {
    pub g: GramFamily,
    pub gt: GramFamily,
}

impl IntertwinerProblem {
    pub fn new(g: GramFamily, gt: GramFamily) -> Result<Self> {
        if g.truncation() != gt.truncation() {
            return Err(Error::Problem("Gram families live on different boxes".into()));
        }
        if g.fiber_dim() != gt.fiber_dim() {
            return Err(Error::Problem(format!(
                "fiber dimensions differ: {} vs {}",
                g.fiber_dim(),
                gt.fiber_dim()
            )));
        }
        let id = linalg::identity(g.fiber_dim());
        for (name, fam) in [("first", &g), ("second", &gt)] {
            if linalg::max_abs(&(fam.g(0) - &id)) > 1e-10 {
                return Err(Error::Problem(format!("G_0 of the {name} family is not the identity")));
            }
        }
        Ok(IntertwinerProblem { g, gt })
    }

    fn points(&self) -> Vec<MultiIndex> {
        self.g.truncation().enumerate()
    }

    /// `max_alpha ||X G_alpha - G~_alpha X|| / ||G_alpha||`.
    pub fn intertwining_residual(&self, x: &CMatrix) -> f64 {
        self.g
            .matrices()
            .iter()
            .zip(self.gt.matrices())
            .map(|(g, gt)| linalg::op_norm(&(x * g - gt * x)) / linalg::op_norm(g))
            .fold(0.0, f64::max)
    }
}

/// First index where the sorted spectra of `G_alpha` and `G~_alpha` differ.
pub fn spectra_precheck(problem: &IntertwinerProblem, rtol: f64) -> Option<MultiIndex> {
    for (a, (g, gt)) in problem
        .points()
        .into_iter()
        .zip(problem.g.matrices().iter().zip(problem.gt.matrices()))
    {
        let e = linalg::hermitian_eigenvalues(g);
        let et = linalg::hermitian_eigenvalues(gt);
        let scale = e.iter().chain(&et).fold(0.0f64, |m, x| m.max(x.abs()));
        if e.iter().zip(&et).any(|(x, y)| (x - y).abs() > rtol * scale) {
            return Some(a);
        }
    }
    None
}

/// Orthonormal (Frobenius) basis of `{X : X G_alpha = G~_alpha X for all alpha}`.
pub fn solve_intertwiner(problem: &IntertwinerProblem, rtol: f64) -> Vec<CMatrix> {
    let n = problem.g.fiber_dim();
    let id = linalg::identity(n);
    let blocks: Vec<CMatrix> = problem
        .g
        .matrices()
        .iter()
        .zip(problem.gt.matrices())
        .map(|(g, gt)| {
            // vec(X G) = (G^T kron I) vec(X), vec(G~ X) = (I kron G~) vec(X).
            let op = g.transpose().kronecker(&id) - id.kronecker(gt);
            op / c64(linalg::op_norm(g), 0.0)
        })
        .collect();
    let rows = blocks.len() * n * n;
    let mut stack = CMatrix::zeros(rows, n * n);
    for (k, b) in blocks.iter().enumerate() {
        stack.view_mut((k * n * n, 0), (n * n, n * n)).copy_from(b);
    }
    let null = linalg::nullspace(&stack, rtol);
    null.column_iter()
        .map(|v| CMatrix::from_column_slice(n, n, v.as_slice()))
        .collect()
}

/// Result of the unitary search.
#[derive(Clone, Debug, PartialEq)]
pub enum SearchOutcome {
    Found {
        u: CMatrix,
        unitarity_residual: f64,
        intertwining_residual: f64,
        attempts: usize,
    },
    NotFound {
        nullspace_dim: usize,
        attempts: usize,
    },
}

/// Tries each basis element, then `budget` seeded real-Gaussian combinations;
/// every invertible candidate is replaced by its polar unitary and accepted
/// only after direct verification of both residual bounds.
pub fn find_unitary(problem: &IntertwinerProblem, basis: &[CMatrix], opts: &EquivalenceOptions) -> SearchOutcome {
    if basis.is_empty() {
        return SearchOutcome::NotFound {
            nullspace_dim: 0,
            attempts: 0,
        };
    }
    let n = problem.g.fiber_dim();
    let total = basis.len() + opts.budget;
    for idx in 0..total {
        let x = if idx < basis.len() {
            basis[idx].clone()
        } else {
            let mut rng = sampling::rng(opts.seed, idx as u64);
            basis
                .iter()
                .fold(CMatrix::zeros(n, n), |acc, b| acc + b * c64(sampling::normal(&mut rng), 0.0))
        };
        let (u, ratio) = linalg::polar_unitary(&x);
        if ratio < opts.invertible_rtol {
            continue;
        }
        let unitarity_residual = linalg::op_norm(&(u.adjoint() * &u - linalg::identity(n)));
        let intertwining_residual = problem.intertwining_residual(&u);
        if unitarity_residual <= opts.unitarity_tol && intertwining_residual <= opts.intertwining_tol {
            return SearchOutcome::Found {
                u,
                unitarity_residual,
                intertwining_residual,
                attempts: idx + 1,
            };
        }
    }
    SearchOutcome::NotFound {
        nullspace_dim: basis.len(),
        attempts: total,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EquivalenceStatus {
    Equivalent,
    NotEquivalent,
    NoUnitaryFound,
}

/// Outcome of the decision pipeline.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivalenceVerdict {
    pub status: EquivalenceStatus,
    #[serde(serialize_with = "serialize_opt_matrix")]
    pub u: Option<CMatrix>,
    pub unitarity_residual: Option<f64>,
    pub intertwining_residual: Option<f64>,
    /// Residual of `V T_j - T~_j V` for `V = sum B~_alpha U B_alpha^{-1}`.
    pub block_intertwining_residual: Option<f64>,
    pub witness: Option<MultiIndex>,
    pub reason: Option<String>,
    pub nullspace_dim: Option<usize>,
    pub attempts: usize,
    /// Hypotheses of the criterion that are recorded, not checked.
    pub assumptions: Vec<String>,
}

fn serialize_opt_matrix<S: serde::Serializer>(m: &Option<CMatrix>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match m {
        Some(m) => weights::matrix_to_doc(m).serialize(s),
        None => s.serialize_none(),
    }
}

impl EquivalenceVerdict {
    fn base(status: EquivalenceStatus) -> Self {
        EquivalenceVerdict {
            status,
            u: None,
            unitarity_residual: None,
            intertwining_residual: None,
            block_intertwining_residual: None,
            witness: None,
            reason: None,
            nullspace_dim: None,
            attempts: 0,
            assumptions: vec!["bpe set of both tuples has nonempty interior".into()],
        }
    }
}

/// Precheck, intertwiner nullspace and unitary search on two Gram families.
pub fn decide_grams(problem: &IntertwinerProblem, opts: &EquivalenceOptions) -> EquivalenceVerdict {
    if let Some(a) = spectra_precheck(problem, opts.spectra_rtol) {
        let mut v = EquivalenceVerdict::base(EquivalenceStatus::NotEquivalent);
        v.reason = Some(format!("spectra of G and G~ differ at {a}"));
        v.witness = Some(a);
        return v;
    }
    let basis = solve_intertwiner(problem, opts.nullspace_rtol);
    if basis.is_empty() {
        let mut v = EquivalenceVerdict::base(EquivalenceStatus::NotEquivalent);
        v.reason = Some("no nonzero intertwiner exists".into());
        v.nullspace_dim = Some(0);
        return v;
    }
    match find_unitary(problem, &basis, opts) {
        SearchOutcome::Found {
            u,
            unitarity_residual,
            intertwining_residual,
            attempts,
        } => {
            let mut v = EquivalenceVerdict::base(EquivalenceStatus::Equivalent);
            v.u = Some(u);
            v.unitarity_residual = Some(unitarity_residual);
            v.intertwining_residual = Some(intertwining_residual);
            v.nullspace_dim = Some(basis.len());
            v.attempts = attempts;
            v
        }
        SearchOutcome::NotFound { nullspace_dim, attempts } => {
            let mut v = EquivalenceVerdict::base(EquivalenceStatus::NoUnitaryFound);
            v.nullspace_dim = Some(nullspace_dim);
            v.attempts = attempts;
            v
        }
    }
}

/// `max_j ||V T_j - T~_j V|| / max(1, ||T_j||)` for `V = sum_alpha B~_alpha U B_alpha^{-1}`.
pub fn block_intertwining_residual(
    a: &WeightFamily,
    b: &WeightFamily,
    ga: &GramFamily,
    gb: &GramFamily,
    u: &CMatrix,
) -> Result<f64> {
    let blocks: Vec<CMatrix> = (0..ga.truncation().len())
        .map(|r| {
            let ba = ga.b(r).expect("factors stored");
            let bb = gb.b(r).expect("factors stored");
            let inv = ba.clone().try_inverse().ok_or_else(|| Error::Problem("singular B_alpha".into()))?;
            Ok(bb * u * inv)
        })
        .collect::<Result<_>>()?;
    let v = linalg::block_diag(&blocks);
    let mut worst: f64 = 0.0;
    for j in 0..a.dim() {
        let ta = shift::assemble_matrix(a, j);
        let tb = shift::assemble_matrix(b, j);
        let r = linalg::op_norm(&(&v * &ta - &tb * &v)) / linalg::op_norm(&ta).max(1.0);
        worst = worst.max(r);
    }
    Ok(worst)
}

/// Full pipeline on two weight families.
pub fn decide(a: &WeightFamily, b: &WeightFamily, opts: &EquivalenceOptions) -> Result<EquivalenceVerdict> {
    if a.dim() != b.dim() || a.cap() != b.cap() {
        return Err(Error::Problem(format!(
            "families differ in shape: d={}, N={} vs d={}, N={}",
            a.dim(),
            a.cap(),
            b.dim(),
            b.cap()
        )));
    }
    if a.constant_fiber().is_none() || a.constant_fiber() != b.constant_fiber() {
        return Err(Error::Problem("families need the same constant fiber dimension".into()));
    }
    let ga = analytic::build_gram(a, opts.tol_invert)?;
    let gb = analytic::build_gram(b, opts.tol_invert)?;
    let problem = IntertwinerProblem::new(ga, gb)?;
    let mut verdict = decide_grams(&problem, opts);
    if opts.verify_intertwine {
        if let Some(u) = verdict.u.clone() {
            let r = block_intertwining_residual(a, b, &problem.g, &problem.gt, &u)?;
            verdict.block_intertwining_residual = Some(r);
            if r > opts.block_tol {
                verdict.status = EquivalenceStatus::NoUnitaryFound;
                verdict.reason = Some(format!("block intertwiner residual {r:e} exceeds {:e}", opts.block_tol));
            }
        }
    }
    Ok(verdict)
}

/// `A~^(j)_alpha = V A^(j)_alpha V^*`.
pub fn conjugate_family(fam: &WeightFamily, v: &CMatrix) -> Result<WeightFamily> {
    fam.map_weights(|_, _, m| v * m * v.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factory;
    use crate::lattice::TruncationBox;

    #[test]
    fn identity_grams_have_full_commutant() {
        let bx = TruncationBox::new(2, 2).unwrap();
        let g = GramFamily::from_matrices(bx, vec![linalg::identity(3); bx.len()]).unwrap();
        let p = IntertwinerProblem::new(g.clone(), g).unwrap();
        assert_eq!(solve_intertwiner(&p, 1e-10).len(), 9);
    }

    #[test]
    fn distinct_spectra_are_rejected() {
        let a = factory::diag_powers(2, 3, 2.0, 0.5).unwrap();
        let b = factory::diag_powers(2, 3, 2.0, 1.0 / 3.0).unwrap();
        let v = decide(&a, &b, &EquivalenceOptions::default()).unwrap();
        assert_eq!(v.status, EquivalenceStatus::NotEquivalent);
        assert_eq!(v.witness.unwrap().degree(), 1);
    }

    #[test]
    fn self_equivalence_returns_identity() {
        let a = factory::example33(2, 3).unwrap();
        let v = decide(&a, &a, &EquivalenceOptions::default()).unwrap();
        assert_eq!(v.status, EquivalenceStatus::Equivalent);
        let u = v.u.unwrap();
        assert!(v.intertwining_residual.unwrap() <= 1e-9);
        assert!(v.block_intertwining_residual.unwrap() <= 1e-8);
        assert!(linalg::op_norm(&(u.adjoint() * &u - linalg::identity(2))) <= 1e-10);
    }
}
