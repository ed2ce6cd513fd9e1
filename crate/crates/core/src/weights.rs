//! Operator weight systems `{A^(j)_alpha}` on a truncation box.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json;
use crate::lattice::{MultiIndex, TruncationBox};
use crate::linalg::{self, c64, CMatrix};

/// Fiber dimensions `n_alpha = dim H_alpha`: a default plus overrides.
#[derive(Clone, Debug, PartialEq)]
pub struct FiberMap {
    pub default: usize,
    pub overrides: Vec<(MultiIndex, usize)>,
}

impl FiberMap {
    pub fn constant(n: usize) -> Self {
        FiberMap {
            default: n,
            overrides: Vec::new(),
        }
    }

    pub fn dim(&self, alpha: &MultiIndex) -> usize {
        self.overrides
            .iter()
            .rev()
            .find(|(a, _)| a == alpha)
            .map(|&(_, n)| n)
            .unwrap_or(self.default)
    }

    /// Builds the smallest description of per-index dimensions: the most
    /// common value becomes the default.
    pub fn from_dims(bx: &TruncationBox, dims: &[usize]) -> Self {
        let mut counts: Vec<(usize, usize)> = Vec::new();
        for &n in dims {
            match counts.iter_mut().find(|(v, _)| *v == n) {
                Some(c) => c.1 += 1,
                None => counts.push((n, 1)),
            }
        }
        let default = counts
            .iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|c| c.0)
            .unwrap_or(1);
        let overrides = bx
            .enumerate()
            .into_iter()
            .zip(dims)
            .filter(|(_, &n)| n != default)
            .map(|(a, &n)| (a, n))
            .collect();
        FiberMap { default, overrides }
    }
}

/// The weights `A^(j)_alpha : H_alpha -> H_{alpha+e_j}` for `|alpha| <= N-1`.
///
/// Storage is indexed by axis, then by the graded rank of `alpha`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightFamily {
    bx: TruncationBox,
    fibers: FiberMap,
    dims: Vec<usize>,
    offsets: Vec<usize>,
    weights: Vec<Vec<CMatrix>>,
}

/// Outcome of the commuting check with its worst witness.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CommutingReport {
    pub commuting: bool,
    pub worst_residual: f64,
    pub witness: Option<(MultiIndex, usize, usize)>,
}

/// Outcome of the invertibility check with the smallest singular value seen.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvertibleReport {
    pub invertible: bool,
    pub min_sigma: f64,
    pub witness: Option<(usize, MultiIndex)>,
}

impl WeightFamily {
    /// Builds a family by evaluating `f(j, alpha)` at every stored position.
    pub fn from_fn(
        bx: TruncationBox,
        fibers: FiberMap,
        mut f: impl FnMut(usize, &MultiIndex) -> CMatrix,
    ) -> Result<Self> {
        let stored = bx.count_up_to(bx.cap() - 1);
        let points = bx.enumerate();
        let mut weights = Vec::with_capacity(bx.dim());
        for j in 0..bx.dim() {
            weights.push(points[..stored].iter().map(|a| f(j, a)).collect());
        }
        Self::from_parts(bx, fibers, weights)
    }

    /// Builds a family from `weights[j][rank(alpha)]`, validating shapes.
    pub fn from_parts(bx: TruncationBox, fibers: FiberMap, weights: Vec<Vec<CMatrix>>) -> Result<Self> {
        let points = bx.enumerate();
        let dims: Vec<usize> = points.iter().map(|a| fibers.dim(a)).collect();
        for (a, &n) in points.iter().zip(&dims) {
            if n == 0 {
                return Err(Error::Fiber { alpha: a.clone(), dim: n });
            }
        }
        for (a, _) in &fibers.overrides {
            if !bx.contains(a) {
                return Err(Error::InvalidBox(format!("fiber override at {a} lies outside the box")));
            }
        }
        if weights.len() != bx.dim() {
            return Err(Error::Axis { axis: weights.len(), d: bx.dim() });
        }
        let stored = bx.count_up_to(bx.cap() - 1);
        for (j, wj) in weights.iter().enumerate() {
            if wj.len() != stored {
                let alpha = points[wj.len().min(stored)].clone();
                return Err(Error::MissingWeight { j, alpha });
            }
            for (r, m) in wj.iter().enumerate() {
                let a = &points[r];
                let rows = dims[bx.rank(&a.add_unit(j)).expect("in box")];
                let cols = dims[r];
                if m.nrows() != rows || m.ncols() != cols {
                    return Err(Error::Shape {
                        j,
                        alpha: a.clone(),
                        expected_rows: rows,
                        expected_cols: cols,
                        rows: m.nrows(),
                        cols: m.ncols(),
                    });
                }
            }
        }
        let mut offsets = Vec::with_capacity(dims.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &n in &dims {
            acc += n;
            offsets.push(acc);
        }
        Ok(WeightFamily {
            bx,
            fibers,
            dims,
            offsets,
            weights,
        })
    }

    /// Constant weight `m` on every axis and index, on fibers `C^n`.
    pub fn constant(bx: TruncationBox, m: &CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare {
                j: 0,
                alpha: MultiIndex::zero(bx.dim()),
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        Self::from_fn(bx, FiberMap::constant(m.nrows()), |_, _| m.clone())
    }

    pub fn dim(&self) -> usize {
        self.bx.dim()
    }

    pub fn truncation(&self) -> &TruncationBox {
        &self.bx
    }

    pub fn cap(&self) -> usize {
        self.bx.cap()
    }

    pub fn fibers(&self) -> &FiberMap {
        &self.fibers
    }

    pub fn fiber_dim(&self, alpha: &MultiIndex) -> usize {
        self.dims[self.rank(alpha)]
    }

    pub fn fiber_dims(&self) -> &[usize] {
        &self.dims
    }

    /// `Some(n)` when every fiber has dimension `n`.
    pub fn constant_fiber(&self) -> Option<usize> {
        let n = self.dims[0];
        self.dims.iter().all(|&m| m == n).then_some(n)
    }

    /// `D = sum of n_alpha` over the box.
    pub fn total_dim(&self) -> usize {
        *self.offsets.last().expect("nonempty")
    }

    /// Offset of block `alpha` in the flat block vector.
    pub fn offset(&self, alpha: &MultiIndex) -> usize {
        self.offsets[self.rank(alpha)]
    }

    pub fn offset_by_rank(&self, r: usize) -> usize {
        self.offsets[r]
    }

    pub fn rank(&self, alpha: &MultiIndex) -> usize {
        self.bx
            .rank(alpha)
            .unwrap_or_else(|| panic!("{alpha} is outside the truncation box"))
    }

    pub fn points(&self) -> Vec<MultiIndex> {
        self.bx.enumerate()
    }

    /// Whether `A^(j)_alpha` is stored, i.e. `|alpha| <= N-1`.
    pub fn has_weight(&self, alpha: &MultiIndex) -> bool {
        alpha.dim() == self.dim() && alpha.degree() < self.cap()
    }

    pub fn weight(&self, j: usize, alpha: &MultiIndex) -> &CMatrix {
        assert!(self.has_weight(alpha), "no weight stored at {alpha}");
        &self.weights[j][self.rank(alpha)]
    }

    pub fn weights_on_axis(&self, j: usize) -> &[CMatrix] {
        &self.weights[j]
    }

    /// Applies `f` to every weight, keeping fibers.
    pub fn map_weights(&self, mut f: impl FnMut(usize, &MultiIndex, &CMatrix) -> CMatrix) -> Result<Self> {
        let pts = self.points();
        let weights = self
            .weights
            .iter()
            .enumerate()
            .map(|(j, wj)| wj.iter().enumerate().map(|(r, m)| f(j, &pts[r], m)).collect())
            .collect();
        Self::from_parts(self.bx, self.fibers.clone(), weights)
    }

    /// Replaces a single weight.
    pub fn with_weight(&self, j: usize, alpha: &MultiIndex, m: CMatrix) -> Result<Self> {
        let mut weights = self.weights.clone();
        weights[j][self.rank(alpha)] = m;
        Self::from_parts(self.bx, self.fibers.clone(), weights)
    }

    /// `s_j = max_alpha ||A^(j)_alpha||` for every axis.
    pub fn check_bounded(&self) -> Vec<f64> {
        self.weights
            .iter()
            .map(|wj| wj.iter().map(linalg::op_norm).fold(0.0, f64::max))
            .collect()
    }

    /// Residual of the commuting relation at `(alpha, i, j)`, relative to
    /// `max(1, ||A^(i)_{alpha+e_j} A^(j)_alpha||)`.
    pub fn commuting_residual(&self, alpha: &MultiIndex, i: usize, j: usize) -> f64 {
        let lhs = self.weight(i, &alpha.add_unit(j)) * self.weight(j, alpha);
        let rhs = self.weight(j, &alpha.add_unit(i)) * self.weight(i, alpha);
        linalg::op_norm(&(&lhs - rhs)) / linalg::op_norm(&lhs).max(1.0)
    }

    pub fn check_commuting(&self, tol: f64) -> CommutingReport {
        let mut worst = 0.0;
        let mut worst_at = None;
        if self.cap() >= 2 {
            let inner = self.bx.count_up_to(self.cap() - 2);
            for alpha in self.points().into_iter().take(inner) {
                for i in 0..self.dim() {
                    for j in (i + 1)..self.dim() {
                        let r = self.commuting_residual(&alpha, i, j);
                        if r > worst {
                            worst = r;
                            worst_at = Some((alpha.clone(), i, j));
                        }
                    }
                }
            }
        }
        let commuting = worst <= tol;
        CommutingReport {
            commuting,
            worst_residual: worst,
            witness: if commuting { None } else { worst_at },
        }
    }

    /// Checks `sigma_min(A^(j)_alpha) >= tol` for every stored weight.
    pub fn check_invertible(&self, tol: f64) -> Result<InvertibleReport> {
        let pts = self.points();
        let mut min_sigma = f64::INFINITY;
        let mut witness = None;
        for (j, wj) in self.weights.iter().enumerate() {
            for (r, m) in wj.iter().enumerate() {
                if m.nrows() != m.ncols() {
                    return Err(Error::NotSquare {
                        j,
                        alpha: pts[r].clone(),
                        rows: m.nrows(),
                        cols: m.ncols(),
                    });
                }
                let s = linalg::sigma_min(m);
                if s < min_sigma {
                    min_sigma = s;
                    if s < tol {
                        witness = Some((j, pts[r].clone()));
                    }
                }
            }
        }
        Ok(InvertibleReport {
            invertible: min_sigma >= tol,
            min_sigma,
            witness,
        })
    }

    pub fn to_document(&self) -> FamilyDoc {
        let pts = self.points();
        let mut weights = Vec::new();
        for (r, alpha) in pts.iter().enumerate().take(self.weights[0].len()) {
            for j in 0..self.dim() {
                weights.push(WeightDoc {
                    j: j + 1,
                    alpha: alpha.clone(),
                    matrix: matrix_to_doc(&self.weights[j][r]),
                });
            }
        }
        FamilyDoc {
            d: self.dim(),
            degree_cap: self.cap(),
            fiber_dims: FiberDoc {
                default: self.fibers.default,
                overrides: self
                    .fibers
                    .overrides
                    .iter()
                    .map(|(a, n)| OverrideDoc { alpha: a.clone(), dim: *n })
                    .collect(),
            },
            weights,
        }
    }

    pub fn from_document(doc: &FamilyDoc) -> Result<Self> {
        let bx = TruncationBox::new(doc.d, doc.degree_cap)?;
        for o in &doc.fiber_dims.overrides {
            if o.alpha.dim() != doc.d {
                return Err(Error::Schema {
                    path: "fiber_dims.overrides".into(),
                    message: format!("multi-index {} has wrong length for d={}", o.alpha, doc.d),
                });
            }
        }
        let fibers = FiberMap {
            default: doc.fiber_dims.default,
            overrides: doc
                .fiber_dims
                .overrides
                .iter()
                .map(|o| (o.alpha.clone(), o.dim))
                .collect(),
        };
        let stored = bx.count_up_to(bx.cap() - 1);
        let mut slots: Vec<Vec<Option<CMatrix>>> = vec![vec![None; stored]; bx.dim()];
        for (k, w) in doc.weights.iter().enumerate() {
            if w.j == 0 || w.j > bx.dim() {
                return Err(Error::Axis {
                    axis: w.j.wrapping_sub(1),
                    d: bx.dim(),
                });
            }
            if w.alpha.dim() != bx.dim() || w.alpha.degree() >= bx.cap() {
                return Err(Error::Schema {
                    path: format!("weights[{k}].alpha"),
                    message: format!("{} is not a stored weight position (|alpha| <= N-1)", w.alpha),
                });
            }
            let m = matrix_from_doc(&w.matrix).map_err(|message| Error::Schema {
                path: format!("weights[{k}].matrix"),
                message,
            })?;
            let r = bx.rank(&w.alpha).expect("checked");
            slots[w.j - 1][r] = Some(m);
        }
        let pts = bx.enumerate();
        let mut weights = Vec::with_capacity(bx.dim());
        // Report the first hole in (alpha, j) order.
        for (r, alpha) in pts.iter().enumerate().take(stored) {
            for (j, sj) in slots.iter().enumerate() {
                if sj[r].is_none() {
                    return Err(Error::MissingWeight { j, alpha: alpha.clone() });
                }
            }
        }
        for sj in slots {
            weights.push(sj.into_iter().map(|m| m.expect("checked")).collect());
        }
        Self::from_parts(bx, fibers, weights)
    }

    pub fn to_json(&self) -> String {
        json::to_canonical(&self.to_document())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: FamilyDoc = json::parse(text)?;
        Self::from_document(&doc)
    }
}

/// Serialized weight family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyDoc {
    pub d: usize,
    pub degree_cap: usize,
    pub fiber_dims: FiberDoc,
    pub weights: Vec<WeightDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberDoc {
    pub default: usize,
    #[serde(default)]
    pub overrides: Vec<OverrideDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideDoc {
    pub alpha: MultiIndex,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightDoc {
    pub j: usize,
    pub alpha: MultiIndex,
    pub matrix: Vec<Vec<[f64; 2]>>,
}

/// Row-major `[[ [re, im], ... ], ...]`.
pub fn matrix_to_doc(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
        .collect()
}

pub fn matrix_from_doc(rows: &[Vec<[f64; 2]>]) -> std::result::Result<CMatrix, String> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(format!("row {i} has {} entries, expected {ncols}", r.len()));
    }
    Ok(CMatrix::from_fn(nrows, ncols, |r, c| {
        let [re, im] = rows[r][c];
        c64(re, im)
    }))
}
