//! The formal power-series model: Gram family `G_alpha = B_alpha^* B_alpha`,
//! the coefficient action of `M_z` and `M_z^*`, joint eigenvectors, the
//! reproducing kernel, and bounded-point-evaluation tests.
//!
//! Coefficient arrays are `Vec<CVector>` indexed by graded rank.

use std::fmt;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::TruncationBox;
use crate::linalg::{self, c64, CMatrix, CVector};
use crate::shift;
use crate::weights::WeightFamily;

pub type Coefficients = Vec<CVector>;

/// `G_alpha` (and optionally `B_alpha`) over a box, with cached inverses.
#[derive(Clone, Debug)]
pub struct GramFamily {
    bx: TruncationBox,
    n: usize,
    g: Vec<CMatrix>,
    g_inv: Vec<CMatrix>,
    b: Option<Vec<CMatrix>>,
}

impl GramFamily {
    /// Builds the family from positive-definite matrices indexed by rank.
    pub fn from_matrices(bx: TruncationBox, g: Vec<CMatrix>) -> Result<Self> {
        if g.len() != bx.len() {
            return Err(Error::Problem(format!("expected {} Gram matrices, got {}", bx.len(), g.len())));
        }
        let n = g[0].nrows();
        let mut g_inv = Vec::with_capacity(g.len());
        let mut sym = Vec::with_capacity(g.len());
        for (r, m) in g.into_iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::Problem(format!("Gram matrix {r} has the wrong shape")));
            }
            let h = linalg::hermitize(&m);
            let inv = linalg::hermitian_inverse(&h)
                .ok_or_else(|| Error::Problem(format!("Gram matrix {r} is singular")))?;
            g_inv.push(inv);
            sym.push(h);
        }
        Ok(GramFamily {
            bx,
            n,
            g: sym,
            g_inv,
            b: None,
        })
    }

    pub fn truncation(&self) -> &TruncationBox {
        &self.bx
    }

    pub fn fiber_dim(&self) -> usize {
        self.n
    }

    pub fn g(&self, r: usize) -> &CMatrix {
        &self.g[r]
    }

    pub fn g_inv(&self, r: usize) -> &CMatrix {
        &self.g_inv[r]
    }

    pub fn matrices(&self) -> &[CMatrix] {
        &self.g
    }

    pub fn b(&self, r: usize) -> Option<&CMatrix> {
        self.b.as_ref().map(|b| &b[r])
    }

    /// Whether every `G_alpha` is diagonal up to `tol` relative.
    pub fn is_diagonal(&self, tol: f64) -> bool {
        self.g.iter().all(|m| {
            let scale = linalg::max_abs(m).max(f64::MIN_POSITIVE);
            (0..self.n).all(|r| (0..self.n).all(|c| r == c || m[(r, c)].norm() <= tol * scale))
        })
    }

    /// The scalar Gram family of the `k`-th diagonal entry.
    pub fn component(&self, k: usize) -> GramFamily {
        let g = self
            .g
            .iter()
            .map(|m| CMatrix::from_element(1, 1, c64(m[(k, k)].re, 0.0)))
            .collect();
        GramFamily::from_matrices(self.bx, g).expect("positive diagonal")
    }
}

/// `G_alpha = B(alpha, alpha)^* B(alpha, alpha)` for an invertible family
/// with constant fibers.
pub fn build_gram(fam: &WeightFamily, tol_invert: f64) -> Result<GramFamily> {
    let Some(n) = fam.constant_fiber() else {
        return Err(Error::Problem("the model needs constant fiber dimension".into()));
    };
    let inv = fam.check_invertible(tol_invert)?;
    if !inv.invertible {
        let (j, a) = inv.witness.expect("witness");
        return Err(Error::Problem(format!(
            "weight j={} at alpha={a} has sigma_min {:e} below {tol_invert:e}",
            j + 1,
            inv.min_sigma
        )));
    }
    let pts = fam.points();
    let b: Vec<CMatrix> = pts.iter().map(|a| shift::moment_b_alpha(fam, a)).collect();
    let g = b.iter().map(|m| m.adjoint() * m).collect();
    let mut gram = GramFamily::from_matrices(*fam.truncation(), g)?;
    debug_assert_eq!(gram.n, n);
    gram.b = Some(b);
    Ok(gram)
}

fn zero_coeffs(bx: &TruncationBox, n: usize) -> Coefficients {
    vec![CVector::zeros(n); bx.len()]
}

/// Coefficients of `z_j f`; the top layer is dropped.
pub fn mz_apply(gram: &GramFamily, j: usize, f: &Coefficients) -> Coefficients {
    let bx = gram.bx;
    let mut out = zero_coeffs(&bx, gram.n);
    for (r, a) in bx.enumerate().iter().enumerate() {
        if let Some(p) = a.sub_unit(j) {
            out[r] = f[bx.rank(&p).expect("in box")].clone();
        }
    }
    out
}

/// Coefficients of `M_{z_j}^* f`: `B_alpha^{-1} A^(j)*_alpha B_{alpha+e_j} f_{alpha+e_j}`
/// for `|alpha| <= N-1`, zero on the top layer.
pub fn mz_adjoint_apply(gram: &GramFamily, fam: &WeightFamily, j: usize, f: &Coefficients) -> Result<Coefficients> {
    let Some(b) = gram.b.as_ref() else {
        return Err(Error::Problem("the adjoint action needs the B_alpha factors".into()));
    };
    let bx = gram.bx;
    let mut out = zero_coeffs(&bx, gram.n);
    for (r, a) in bx.enumerate().iter().enumerate() {
        if a.degree() < bx.cap() {
            let up = bx.rank(&a.add_unit(j)).expect("in box");
            let y = fam.weight(j, a).adjoint() * (&b[up] * &f[up]);
            out[r] = b[r].clone().lu().solve(&y).ok_or_else(|| Error::Problem("singular B_alpha".into()))?;
        }
    }
    Ok(out)
}

/// `<f, g> = sum_alpha g_alpha^* G_alpha f_alpha`.
pub fn inner(gram: &GramFamily, f: &Coefficients, g: &Coefficients) -> Complex64 {
    f.iter()
        .zip(g)
        .zip(&gram.g)
        .map(|((fa, ga), m)| ga.dotc(&(m * fa)))
        .sum()
}

/// Joint eigenvector of `M_z^*` for the eigenvalue `conj(w)`: coefficients
/// `conj(w)^alpha G_alpha^{-1} x`.
pub fn eigenvector_build(gram: &GramFamily, w: &[Complex64], x: &CVector) -> Result<Coefficients> {
    if x.norm() == 0.0 {
        return Err(Error::Domain("eigenvector seed x must be nonzero".into()));
    }
    if w.len() != gram.bx.dim() || x.len() != gram.n {
        return Err(Error::Domain("point or seed has the wrong dimension".into()));
    }
    let wc: Vec<Complex64> = w.iter().map(|z| z.conj()).collect();
    Ok(gram
        .bx
        .enumerate()
        .iter()
        .enumerate()
        .map(|(r, a)| &gram.g_inv[r] * x * a.monomial(&wc))
        .collect())
}

/// `max_j ||(M_{z_j}^* - conj(w_j)) f||` over `|alpha| <= N-1`, relative to
/// the size of `f` there.
pub fn eigen_residual(gram: &GramFamily, fam: &WeightFamily, w: &[Complex64], f: &Coefficients) -> Result<f64> {
    let bx = gram.bx;
    let interior: Vec<usize> = (0..bx.count_up_to(bx.cap() - 1)).collect();
    let scale = interior.iter().map(|&r| f[r].norm_squared()).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for (j, wj) in w.iter().enumerate() {
        let mf = mz_adjoint_apply(gram, fam, j, f)?;
        let res = interior
            .iter()
            .map(|&r| (&mf[r] - &f[r] * wj.conj()).norm_squared())
            .sum::<f64>()
            .sqrt();
        worst = worst.max(res / scale);
    }
    Ok(worst)
}

/// A truncated kernel value with the size of its last layer.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelValue {
    pub value: CMatrix,
    pub last_layer_norm: f64,
}

/// `kappa(z, w) = sum_{|alpha| <= N} G_alpha^{-1} z^alpha conj(w)^alpha`.
pub fn kernel_eval(gram: &GramFamily, z: &[Complex64], w: &[Complex64]) -> KernelValue {
    let wc: Vec<Complex64> = w.iter().map(|x| x.conj()).collect();
    let mut value = CMatrix::zeros(gram.n, gram.n);
    let mut last = CMatrix::zeros(gram.n, gram.n);
    for (r, a) in gram.bx.enumerate().iter().enumerate() {
        let term = &gram.g_inv[r] * (a.monomial(z) * a.monomial(&wc));
        if a.degree() == gram.bx.cap() {
            last += &term;
        }
        value += term;
    }
    KernelValue {
        value,
        last_layer_norm: linalg::op_norm(&last),
    }
}

/// Block matrix `[kappa(z_i, z_j)]`.
pub fn kernel_gram_matrix(gram: &GramFamily, points: &[Vec<Complex64>]) -> CMatrix {
    let n = gram.n;
    let k = points.len();
    let mut out = CMatrix::zeros(n * k, n * k);
    for (i, zi) in points.iter().enumerate() {
        for (j, zj) in points.iter().enumerate() {
            let v = kernel_eval(gram, zi, zj).value;
            out.view_mut((i * n, j * n), (n, n)).copy_from(&v);
        }
    }
    out
}

/// Window policy for the three-valued convergence decision.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BpePolicy {
    pub window: usize,
    pub margin: f64,
    pub cap: f64,
}

impl Default for BpePolicy {
    fn default() -> Self {
        BpePolicy {
            window: 5,
            margin: 1e-3,
            cap: 1e12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Convergence {
    Bpe,
    NotBpe,
    Inconclusive,
}

impl fmt::Display for Convergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Convergence::Bpe => "bpe",
            Convergence::NotBpe => "not_bpe",
            Convergence::Inconclusive => "inconclusive",
        })
    }
}

/// Partial sums, per-layer terms and the resulting decision at one point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BpeVerdict {
    pub point: Vec<Complex64>,
    pub classification: Convergence,
    /// `S_L` for `L = 0..=N`.
    pub partial_sums: Vec<f64>,
    /// Largest eigenvalue of the degree-`L` contribution.
    pub layer_terms: Vec<f64>,
    pub ratio_estimate: Option<f64>,
}

impl BpeVerdict {
    pub fn s_last(&self) -> f64 {
        *self.partial_sums.last().expect("at least one layer")
    }
}

/// Classifies a nonnegative series from its partial sums and layer terms:
/// geometric ratio over the last `window` layers, or the divergence cap.
pub fn classify_series(partial: &[f64], terms: &[f64], policy: &BpePolicy) -> (Convergence, Option<f64>) {
    let last = *partial.last().expect("nonempty");
    let top = terms.len() - 1;
    let w = policy.window.min(top);
    let ratio = (w > 0).then(|| {
        let (hi, lo) = (terms[top], terms[top - w]);
        if hi == 0.0 {
            0.0
        } else if lo == 0.0 {
            f64::INFINITY
        } else {
            (hi / lo).powf(1.0 / w as f64)
        }
    });
    if !last.is_finite() || last > policy.cap {
        return (Convergence::NotBpe, ratio);
    }
    let Some(ratio) = ratio else {
        return (Convergence::Inconclusive, None);
    };
    let class = if ratio <= 1.0 - policy.margin {
        Convergence::Bpe
    } else if ratio >= 1.0 + policy.margin {
        Convergence::NotBpe
    } else {
        Convergence::Inconclusive
    };
    (class, Some(ratio))
}

/// Layer terms of `sum |w^alpha|^2 M_alpha` where `M_alpha` is produced by
/// `select`, measured by the largest eigenvalue of each partial sum.
fn layered_sums(
    gram: &GramFamily,
    w: &[Complex64],
    mut select: impl FnMut(usize) -> CMatrix,
) -> (Vec<f64>, Vec<f64>) {
    let bx = gram.bx;
    let pts = bx.enumerate();
    let size = select(0).nrows();
    let mut acc = CMatrix::zeros(size, size);
    let mut partial = Vec::with_capacity(bx.cap() + 1);
    let mut terms = Vec::with_capacity(bx.cap() + 1);
    let mut r = 0;
    for level in 0..=bx.cap() {
        let mut layer = CMatrix::zeros(size, size);
        while r < pts.len() && pts[r].degree() == level {
            let m = pts[r].monomial(w).norm_sqr();
            if m != 0.0 {
                layer += select(r) * c64(m, 0.0);
            }
            r += 1;
        }
        acc += &layer;
        let top = |m: &CMatrix| linalg::hermitian_eigenvalues(m).last().copied().unwrap_or(0.0).max(0.0);
        terms.push(top(&layer));
        partial.push(top(&acc));
    }
    (partial, terms)
}

/// `S_L = lambda_max(sum_{|alpha| <= L} |w^alpha|^2 G_alpha^{-1})` and its
/// classification under `policy`.
pub fn bpe_test(gram: &GramFamily, w: &[Complex64], policy: &BpePolicy) -> BpeVerdict {
    let (partial, terms) = layered_sums(gram, w, |r| gram.g_inv[r].clone());
    let (classification, ratio_estimate) = classify_series(&partial, &terms, policy);
    BpeVerdict {
        point: w.to_vec(),
        classification,
        partial_sums: partial,
        layer_terms: terms,
        ratio_estimate,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PointSpectrum {
    InPointSpectrum,
    NotDetected,
    Inconclusive,
}

impl fmt::Display for PointSpectrum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PointSpectrum::InPointSpectrum => "in_point_spectrum",
            PointSpectrum::NotDetected => "not_detected",
            PointSpectrum::Inconclusive => "inconclusive",
        })
    }
}

/// Series along one shared eigendirection `v`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DirectionSeries {
    pub direction: Vec<Complex64>,
    pub classification: Convergence,
    pub partial_sums: Vec<f64>,
    pub ratio_estimate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointSpectrumVerdict {
    pub point: Vec<Complex64>,
    pub classification: PointSpectrum,
    /// Largest normalized commutator among the `G_alpha`.
    pub commutator_residual: f64,
    pub directions: Vec<DirectionSeries>,
}

/// Relative commutator threshold for simultaneous diagonalization.
pub const COMMUTE_TOL: f64 = 1e-10;

/// A common eigenbasis of the `G_alpha`, when they pairwise commute.
pub fn shared_eigenbasis(gram: &GramFamily) -> (f64, Option<CMatrix>) {
    let mut worst: f64 = 0.0;
    let norms: Vec<f64> = gram.g.iter().map(linalg::op_norm).collect();
    for p in 0..gram.g.len() {
        for q in (p + 1)..gram.g.len() {
            let c = &gram.g[p] * &gram.g[q] - &gram.g[q] * &gram.g[p];
            worst = worst.max(linalg::op_norm(&c) / (norms[p] * norms[q]));
        }
    }
    if worst > COMMUTE_TOL {
        return (worst, None);
    }
    // A generic combination separates the joint eigenspaces.
    let golden = 0.618_033_988_749_894_9;
    let mut combo = CMatrix::zeros(gram.n, gram.n);
    for (r, m) in gram.g.iter().enumerate() {
        let c = 0.5 + ((r as f64 + 1.0) * golden).fract();
        combo += m * c64(c / norms[r], 0.0);
    }
    let (_, vecs) = linalg::hermitian_eig(&combo);
    for m in &gram.g {
        let d = vecs.adjoint() * m * &vecs;
        let off = (0..gram.n)
            .flat_map(|r| (0..gram.n).map(move |c| (r, c)))
            .filter(|(r, c)| r != c)
            .map(|(r, c)| d[(r, c)].norm())
            .fold(0.0, f64::max);
        if off > 1e-8 * linalg::op_norm(m) {
            return (worst, None);
        }
    }
    (worst, Some(vecs))
}

/// Decides whether `conj(w)` is a joint eigenvalue of `M_z^*` when the
/// `G_alpha` share an eigenbasis: some eigendirection must give a convergent
/// series `sum |w^alpha|^2 v^* G_alpha^{-1} v`.
pub fn pointspec_test(gram: &GramFamily, w: &[Complex64], policy: &BpePolicy) -> PointSpectrumVerdict {
    let (residual, basis) = shared_eigenbasis(gram);
    let Some(vecs) = basis else {
        return PointSpectrumVerdict {
            point: w.to_vec(),
            classification: PointSpectrum::Inconclusive,
            commutator_residual: residual,
            directions: Vec::new(),
        };
    };
    let mut directions = Vec::with_capacity(gram.n);
    for c in 0..gram.n {
        let v: CVector = vecs.column(c).into_owned();
        let (partial, terms) = layered_sums(gram, w, |r| {
            CMatrix::from_element(1, 1, c64(v.dotc(&(&gram.g_inv[r] * &v)).re, 0.0))
        });
        let (classification, ratio_estimate) = classify_series(&partial, &terms, policy);
        directions.push(DirectionSeries {
            direction: v.iter().copied().collect(),
            classification,
            partial_sums: partial,
            ratio_estimate,
        });
    }
    let classification = if directions.iter().any(|d| d.classification == Convergence::Bpe) {
        PointSpectrum::InPointSpectrum
    } else if directions.iter().all(|d| d.classification == Convergence::NotBpe) {
        PointSpectrum::NotDetected
    } else {
        PointSpectrum::Inconclusive
    };
    PointSpectrumVerdict {
        point: w.to_vec(),
        classification,
        commutator_residual: residual,
        directions,
    }
}

/// One grid point of a scan.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridRow {
    pub verdict: BpeVerdict,
    /// For diagonal families: the intersection of per-component verdicts.
    pub component_intersection: Option<Convergence>,
}

impl GridRow {
    /// Decided verdicts that contradict the component intersection.
    pub fn disagrees(&self) -> bool {
        match self.component_intersection {
            Some(c) => {
                c != Convergence::Inconclusive
                    && self.verdict.classification != Convergence::Inconclusive
                    && c != self.verdict.classification
            }
            None => false,
        }
    }
}

/// Combines scalar verdicts: bpe needs all components, one divergent
/// component suffices for not_bpe.
pub fn intersect(verdicts: &[Convergence]) -> Convergence {
    if verdicts.iter().all(|v| *v == Convergence::Bpe) {
        Convergence::Bpe
    } else if verdicts.contains(&Convergence::NotBpe) {
        Convergence::NotBpe
    } else {
        Convergence::Inconclusive
    }
}

/// Runs `bpe_test` on the polar grid `r * u` for every radius and direction;
/// diagonal families also get the component-wise verdicts.
pub fn bpe_grid_scan(
    gram: &GramFamily,
    radii: &[f64],
    directions: &[Vec<Complex64>],
    policy: &BpePolicy,
) -> Vec<GridRow> {
    let components: Option<Vec<GramFamily>> = gram
        .is_diagonal(1e-14)
        .then(|| (0..gram.n).map(|k| gram.component(k)).collect());
    let mut rows = Vec::with_capacity(radii.len() * directions.len());
    for u in directions {
        for &r in radii {
            let w: Vec<Complex64> = u.iter().map(|z| z * r).collect();
            let verdict = bpe_test(gram, &w, policy);
            let component_intersection = components.as_ref().map(|cs| {
                let vs: Vec<Convergence> = cs.iter().map(|c| bpe_test(c, &w, policy).classification).collect();
                intersect(&vs)
            });
            rows.push(GridRow {
                verdict,
                component_intersection,
            });
        }
    }
    rows
}

/// CSV with columns `w_1_re, w_1_im, ..., classification, S_last,
/// ratio_estimate, component_intersection`; floats carry 17 significant digits.
pub fn grid_to_csv(d: usize, rows: &[GridRow]) -> String {
    let mut out = String::new();
    for k in 1..=d {
        out.push_str(&format!("w_{k}_re,w_{k}_im,"));
    }
    out.push_str("classification,S_last,ratio_estimate,component_intersection\n");
    for row in rows {
        for z in &row.verdict.point {
            out.push_str(&format!("{:.16e},{:.16e},", z.re, z.im));
        }
        out.push_str(&row.verdict.classification.to_string());
        out.push(',');
        out.push_str(&format!("{:.16e}", row.verdict.s_last()));
        out.push(',');
        if let Some(r) = row.verdict.ratio_estimate {
            out.push_str(&format!("{r:.16e}"));
        }
        out.push(',');
        if let Some(c) = row.component_intersection {
            out.push_str(&c.to_string());
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factory;

    #[test]
    fn identity_gram_is_identity() {
        let fam = WeightFamily::constant(TruncationBox::new(2, 3).unwrap(), &linalg::identity(2)).unwrap();
        let g = build_gram(&fam, 1e-12).unwrap();
        for m in g.matrices() {
            assert!(linalg::max_abs(&(m - linalg::identity(2))) < 1e-15);
        }
    }

    #[test]
    fn origin_is_always_bpe() {
        let fam = factory::diag_powers(2, 6, 2.0, 0.5).unwrap();
        let g = build_gram(&fam, 1e-12).unwrap();
        let v = bpe_test(&g, &[c64(0.0, 0.0), c64(0.0, 0.0)], &BpePolicy::default());
        assert_eq!(v.classification, Convergence::Bpe);
        assert!(v.partial_sums.iter().all(|&s| (s - 1.0).abs() < 1e-15));
        let p = pointspec_test(&g, &[c64(0.0, 0.0), c64(0.0, 0.0)], &BpePolicy::default());
        assert_eq!(p.classification, PointSpectrum::InPointSpectrum);
    }

    #[test]
    fn classify_series_thresholds() {
        let p = BpePolicy::default();
        let terms: Vec<f64> = (0..10).map(|k| 0.5f64.powi(k)).collect();
        let partial: Vec<f64> = terms.iter().scan(0.0, |s, t| { *s += t; Some(*s) }).collect();
        assert_eq!(classify_series(&partial, &terms, &p).0, Convergence::Bpe);
        let ones = vec![1.0; 10];
        let sums: Vec<f64> = (1..=10).map(|k| k as f64).collect();
        assert_eq!(classify_series(&sums, &ones, &p).0, Convergence::Inconclusive);
        let big = vec![1.0, 1e13];
        assert_eq!(classify_series(&big, &big, &p).0, Convergence::NotBpe);
    }

    #[test]
    fn zero_seed_is_rejected() {
        let fam = WeightFamily::constant(TruncationBox::new(1, 3).unwrap(), &linalg::identity(2)).unwrap();
        let g = build_gram(&fam, 1e-12).unwrap();
        assert!(eigenvector_build(&g, &[c64(0.3, 0.0)], &CVector::zeros(2)).is_err());
    }
}
