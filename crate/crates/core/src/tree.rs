//! Weighted shifts on directed Cartesian products of rooted trees, their
//! embedding as operator-valued multishifts, and the one-variable
//! decomposition of a multishift into a forest of tree shifts.

use std::collections::{BTreeMap, VecDeque};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{MultiIndex, TruncationBox};
use crate::linalg::{self, c64, CMatrix, CVector};
use crate::shift;
use crate::weights::{FiberMap, WeightFamily};

/// A finite rooted directed tree given by its parent map.
#[derive(Clone, Debug, PartialEq)]
pub struct RootedTree {
    parent: Vec<Option<usize>>,
    root: usize,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    bfs: Vec<usize>,
    bfs_index: Vec<usize>,
}

impl RootedTree {
    pub fn new(parent: Vec<Option<usize>>) -> Result<Self> {
        let n = parent.len();
        let roots: Vec<usize> = (0..n).filter(|&v| parent[v].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::Tree(format!("expected exactly one root, found {}", roots.len())));
        }
        let root = roots[0];
        let mut children = vec![Vec::new(); n];
        for (v, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                if p >= n {
                    return Err(Error::Tree(format!("vertex {v} has parent {p} outside 0..{n}")));
                }
                if p == v {
                    return Err(Error::Tree(format!("vertex {v} is its own parent")));
                }
                children[p].push(v);
            }
        }
        let mut depth = vec![usize::MAX; n];
        let mut bfs = Vec::with_capacity(n);
        let mut queue = VecDeque::from([root]);
        depth[root] = 0;
        while let Some(v) = queue.pop_front() {
            bfs.push(v);
            for &c in &children[v] {
                depth[c] = depth[v] + 1;
                queue.push_back(c);
            }
        }
        if bfs.len() != n {
            return Err(Error::Tree("some vertices are not reachable from the root (cycle)".into()));
        }
        let mut bfs_index = vec![0; n];
        for (i, &v) in bfs.iter().enumerate() {
            bfs_index[v] = i;
        }
        Ok(RootedTree {
            parent,
            root,
            children,
            depth,
            bfs,
            bfs_index,
        })
    }

    /// The path `0 -> 1 -> ... -> len-1`.
    pub fn chain(len: usize) -> Self {
        let parent = (0..len).map(|v| v.checked_sub(1)).collect();
        RootedTree::new(parent).expect("chain is a tree")
    }

    /// The complete binary tree of the given depth, numbered in BFS order.
    pub fn binary(depth: usize) -> Self {
        let n = (1usize << (depth + 1)) - 1;
        let parent = (0..n).map(|v| if v == 0 { None } else { Some((v - 1) / 2) }).collect();
        RootedTree::new(parent).expect("binary tree")
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn depth(&self, v: usize) -> usize {
        self.depth[v]
    }

    pub fn bfs_order(&self) -> &[usize] {
        &self.bfs
    }

    pub fn bfs_index(&self, v: usize) -> usize {
        self.bfs_index[v]
    }
}

/// Weights `lambda^(j)_v` of a product-tree shift, indexed by the child
/// vertex `v` and the axis `j` along which it was reached.
pub trait ProductWeights {
    fn weight(&self, j: usize, v: &[usize]) -> Complex64;
}

/// `lambda^(j)_v = mu_j(v_j)`: each axis carries the weights of its own tree,
/// which makes the product shifts commute.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorWeights {
    pub per_tree: Vec<Vec<Complex64>>,
}

impl ProductWeights for FactorWeights {
    fn weight(&self, j: usize, v: &[usize]) -> Complex64 {
        self.per_tree[j][v[j]]
    }
}

/// Factor weights with explicit per-vertex overrides.
#[derive(Clone, Debug, PartialEq)]
pub struct ExplicitWeights {
    pub base: FactorWeights,
    pub overrides: BTreeMap<(usize, Vec<usize>), Complex64>,
}

impl ProductWeights for ExplicitWeights {
    fn weight(&self, j: usize, v: &[usize]) -> Complex64 {
        self.overrides
            .get(&(j, v.to_vec()))
            .copied()
            .unwrap_or_else(|| self.base.weight(j, v))
    }
}

/// The directed Cartesian product of `d` rooted trees.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeProduct {
    pub trees: Vec<RootedTree>,
}

impl TreeProduct {
    pub fn new(trees: Vec<RootedTree>) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::Tree("a product needs at least one tree".into()));
        }
        Ok(TreeProduct { trees })
    }

    pub fn dim(&self) -> usize {
        self.trees.len()
    }

    /// `d_v`: the componentwise depth.
    pub fn depth(&self, v: &[usize]) -> MultiIndex {
        MultiIndex::new(v.iter().zip(&self.trees).map(|(&x, t)| t.depth(x)).collect())
    }

    /// All product vertices in odometer order over original ids.
    pub fn vertices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for t in &self.trees {
            out = out
                .into_iter()
                .flat_map(|p| {
                    (0..t.len()).map(move |x| {
                        let mut q = p.clone();
                        q.push(x);
                        q
                    })
                })
                .collect();
        }
        out
    }

    /// Children of `v` along axis `j`.
    pub fn children(&self, j: usize, v: &[usize]) -> Vec<Vec<usize>> {
        self.trees[j]
            .children(v[j])
            .iter()
            .map(|&c| {
                let mut w = v.to_vec();
                w[j] = c;
                w
            })
            .collect()
    }

    fn bfs_key(&self, v: &[usize]) -> Vec<usize> {
        v.iter().zip(&self.trees).map(|(&x, t)| t.bfs_index(x)).collect()
    }

    /// Per-tree factor weights, every vertex weight defaulting to one.
    pub fn unit_weights(&self) -> FactorWeights {
        FactorWeights {
            per_tree: self.trees.iter().map(|t| vec![c64(1.0, 0.0); t.len()]).collect(),
        }
    }
}

/// A product-tree shift written as an operator-valued multishift.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub family: WeightFamily,
    /// Vertices of `V_alpha` per graded rank, in block order.
    pub strata: Vec<Vec<Vec<usize>>>,
    /// `max_v ||U S_j e_v - T_j U e_v||` over truncated basis vectors.
    pub intertwining_residual: f64,
}

/// Builds `A^(j)_alpha = S_j|_{l2(V_alpha)}` in vertex bases ordered by
/// per-tree BFS indices. Vertices deeper than the cap are dropped.
pub fn embed(product: &TreeProduct, weights: &dyn ProductWeights, cap: usize) -> Result<Embedding> {
    let d = product.dim();
    let bx = TruncationBox::new(d, cap).map_err(|e| Error::Box(e.to_string()))?;
    let mut strata: Vec<Vec<Vec<usize>>> = vec![Vec::new(); bx.len()];
    let all = product.vertices();
    for v in &all {
        let dv = product.depth(v);
        if let Some(r) = bx.rank(&dv) {
            strata[r].push(v.clone());
        }
    }
    for (r, s) in strata.iter_mut().enumerate() {
        if s.is_empty() {
            let a = bx.unrank(r).expect("rank in range");
            return Err(Error::Box(format!("no vertex has depth {a}; the trees are too shallow for cap {cap}")));
        }
        s.sort_by_key(|v| product.bfs_key(v));
    }
    let position = |r: usize, v: &[usize]| strata[r].iter().position(|w| w == v).expect("vertex in stratum");
    let dims: Vec<usize> = strata.iter().map(|s| s.len()).collect();
    let fibers = FiberMap::from_dims(&bx, &dims);
    let family = WeightFamily::from_fn(bx, fibers, |j, a| {
        let r = bx.rank(a).expect("in box");
        let up = bx.rank(&a.add_unit(j)).expect("in box");
        let mut m = CMatrix::zeros(dims[up], dims[r]);
        for (col, v) in strata[r].iter().enumerate() {
            for w in product.children(j, v) {
                m[(position(up, &w), col)] = weights.weight(j, &w);
            }
        }
        m
    })?;

    // Independent check on the vertex space: S_j built from adjacency.
    let kept: Vec<&Vec<usize>> = all.iter().filter(|v| bx.contains(&product.depth(v))).collect();
    let flat_index = |v: &[usize]| -> usize {
        let dv = product.depth(v);
        let r = bx.rank(&dv).expect("in box");
        family.offset_by_rank(r) + position(r, v)
    };
    let mut residual: f64 = 0.0;
    for j in 0..d {
        let t = shift::assemble_matrix(&family, j);
        for v in &kept {
            let mut lhs = CVector::zeros(family.total_dim());
            for w in product.children(j, v) {
                if bx.contains(&product.depth(&w)) {
                    lhs[flat_index(&w)] += weights.weight(j, &w);
                }
            }
            let rhs = t.column(flat_index(v));
            residual = residual.max((lhs - rhs).norm());
        }
    }
    Ok(Embedding {
        family,
        strata,
        intertwining_residual: residual,
    })
}

/// Per level, the `(level, index)` label of each fiber basis vector.
pub type LevelLabels = Vec<Vec<(usize, usize)>>;

/// A weighted shift on one rooted tree of the forest; vertex `k` is the
/// basis vector `labels[k] = (level, index into B_level)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeShift {
    pub parent: Vec<Option<usize>>,
    /// `lambda_v`, absent at the root.
    pub weights: Vec<Option<Complex64>>,
    pub labels: Vec<(usize, usize)>,
}

/// Output of the one-variable decomposition.
#[derive(Clone, Debug)]
pub enum Decomposition {
    Forest {
        trees: Vec<TreeShift>,
        /// `max ||T U e_v - U S e_v||` over all vertices.
        intertwining_residual: f64,
        /// Vertices without children below the cap.
        leaves: usize,
    },
    NotApplicable {
        reason: String,
        level: usize,
        index: usize,
    },
}

/// Splits a `d = 1` multishift into `dim H_0` tree shifts using orthonormal
/// bases `B_n` (columns of `bases[n]`) and the partition `W_x` of `B_{n+1}`
/// attached to each `x` in `B_n`.
pub fn decompose_unilateral(
    fam: &WeightFamily,
    bases: &[CMatrix],
    partition: &[Vec<Vec<usize>>],
    tol: f64,
    coeff_tol: f64,
) -> Result<Decomposition> {
    if fam.dim() != 1 {
        return Err(Error::Problem("the decomposition applies to d = 1 only".into()));
    }
    let cap = fam.cap();
    if bases.len() != cap + 1 {
        return Err(Error::Problem(format!("expected {} bases, got {}", cap + 1, bases.len())));
    }
    if partition.len() != cap {
        return Err(Error::Problem(format!("expected {} partition levels, got {}", cap, partition.len())));
    }
    let lvl = |n: usize| MultiIndex::new(vec![n]);
    let na = |reason: String, level: usize, index: usize| Ok(Decomposition::NotApplicable { reason, level, index });
    for (n, b) in bases.iter().enumerate() {
        let dim = fam.fiber_dim(&lvl(n));
        if b.nrows() != dim || b.ncols() != dim {
            return Err(Error::Problem(format!("basis {n} must be {dim}x{dim}")));
        }
        let defect = linalg::op_norm(&(b.adjoint() * b - linalg::identity(dim)));
        if defect > tol {
            return na(format!("basis B_{n} is not orthonormal (defect {defect:e})"), n, 0);
        }
    }
    for (n, level) in partition.iter().enumerate() {
        let here = fam.fiber_dim(&lvl(n));
        let next = fam.fiber_dim(&lvl(n + 1));
        if level.len() != here {
            return Err(Error::Problem(format!("partition level {n} needs {here} sets")));
        }
        let mut seen = vec![false; next];
        for (x, set) in level.iter().enumerate() {
            for &y in set {
                if y >= next || seen[y] {
                    return na(format!("condition (a) fails: index {y} at level {} is invalid or repeated", n + 1), n, x);
                }
                seen[y] = true;
            }
        }
        if let Some(y) = seen.iter().position(|s| !s) {
            return na(format!("condition (a) fails: basis vector {y} of B_{} is not covered", n + 1), n, 0);
        }
    }
    // Condition (b): A_n x expands over W_x with nonvanishing coefficients.
    let mut coeffs: Vec<Vec<Vec<Complex64>>> = Vec::with_capacity(cap);
    for (n, level) in partition.iter().enumerate() {
        let a = fam.weight(0, &lvl(n));
        let mut per_x = Vec::with_capacity(level.len());
        for (x, set) in level.iter().enumerate() {
            let v = a * bases[n].column(x);
            let mut approx = CVector::zeros(v.len());
            let mut cs = Vec::with_capacity(set.len());
            for &y in set {
                let by = bases[n + 1].column(y);
                let c = by.dotc(&v);
                if c.norm() < coeff_tol {
                    return na(format!("condition (b) fails: <A_{n} x, y> = {c} vanishes for y = {y}"), n, x);
                }
                approx += by * c;
                cs.push(c);
            }
            let res = (&v - approx).norm();
            if res > tol * v.norm().max(1.0) {
                return na(format!("condition (b) fails: A_{n} x is not spanned by W_x (residual {res:e})"), n, x);
            }
            per_x.push(cs);
        }
        coeffs.push(per_x);
    }

    let mut trees = Vec::new();
    let mut leaves = 0;
    for root in 0..bases[0].ncols() {
        let mut parent = vec![None];
        let mut weights = vec![None];
        let mut labels = vec![(0usize, root)];
        let mut queue = VecDeque::from([0usize]);
        while let Some(k) = queue.pop_front() {
            let (n, x) = labels[k];
            if n == cap {
                continue;
            }
            if partition[n][x].is_empty() {
                leaves += 1;
            }
            for (i, &y) in partition[n][x].iter().enumerate() {
                parent.push(Some(k));
                weights.push(Some(coeffs[n][x][i]));
                labels.push((n + 1, y));
                queue.push_back(labels.len() - 1);
            }
        }
        trees.push(TreeShift { parent, weights, labels });
    }

    let t = shift::assemble_matrix(fam, 0);
    let embed_vec = |(n, x): (usize, usize)| -> CVector {
        let mut out = CVector::zeros(fam.total_dim());
        let col = bases[n].column(x);
        out.rows_mut(fam.offset(&lvl(n)), col.len()).copy_from(&col);
        out
    };
    let mut residual: f64 = 0.0;
    for tree in &trees {
        for (k, &label) in tree.labels.iter().enumerate() {
            let lhs = &t * embed_vec(label);
            let mut rhs = CVector::zeros(fam.total_dim());
            for (c, p) in tree.parent.iter().enumerate() {
                if *p == Some(k) {
                    rhs += embed_vec(tree.labels[c]) * tree.weights[c].expect("non-root");
                }
            }
            residual = residual.max((lhs - rhs).norm());
        }
    }
    Ok(Decomposition::Forest {
        trees,
        intertwining_residual: residual,
        leaves,
    })
}

/// Reassembles a forest of tree shifts into a `d = 1` family whose level-`n`
/// fiber lists the depth-`n` vertices ordered by (tree, BFS order). Returns
/// the family and the vertex labels of each level in that order.
pub fn forest_to_family(trees: &[TreeShift], cap: usize) -> Result<(WeightFamily, LevelLabels)> {
    let bx = TruncationBox::new(1, cap)?;
    let mut levels: Vec<Vec<(usize, usize)>> = vec![Vec::new(); cap + 1];
    let mut rooted = Vec::with_capacity(trees.len());
    for (ti, t) in trees.iter().enumerate() {
        let tree = RootedTree::new(t.parent.clone())?;
        for &v in tree.bfs_order() {
            let dv = tree.depth(v);
            if dv <= cap {
                levels[dv].push((ti, v));
            }
        }
        rooted.push(tree);
    }
    if let Some(n) = levels.iter().position(|l| l.is_empty()) {
        return Err(Error::Box(format!("the forest has no vertex at depth {n}")));
    }
    let dims: Vec<usize> = levels.iter().map(|l| l.len()).collect();
    let fam = WeightFamily::from_fn(bx, FiberMap::from_dims(&bx, &dims), |_, a| {
        let n = a.get(0);
        let mut m = CMatrix::zeros(dims[n + 1], dims[n]);
        for (row, &(ti, v)) in levels[n + 1].iter().enumerate() {
            let p = rooted[ti].parent(v).expect("non-root");
            let col = levels[n].iter().position(|&q| q == (ti, p)).expect("parent one level up");
            m[(row, col)] = trees[ti].weights[v].unwrap_or(c64(0.0, 0.0));
        }
        m
    })?;
    let labels = levels
        .iter()
        .map(|l| l.iter().map(|&(ti, v)| trees[ti].labels[v]).collect())
        .collect();
    Ok((fam, labels))
}

/// `max_n ||A_n Q_n - Q_{n+1} A~_n||` where `Q_n` maps the forest basis of
/// level `n` onto the original basis vectors.
pub fn round_trip_residual(original: &WeightFamily, bases: &[CMatrix], trees: &[TreeShift]) -> Result<f64> {
    let (fam, labels) = forest_to_family(trees, original.cap())?;
    let q: Vec<CMatrix> = labels
        .iter()
        .map(|l| {
            let n = l.first().map_or(0, |x| x.0);
            CMatrix::from_columns(&l.iter().map(|&(_, x)| bases[n].column(x)).collect::<Vec<_>>())
        })
        .collect();
    let mut worst: f64 = 0.0;
    for n in 0..original.cap() {
        let a = MultiIndex::new(vec![n]);
        let lhs = original.weight(0, &a) * &q[n];
        let rhs = &q[n + 1] * fam.weight(0, &a);
        if lhs.shape() != rhs.shape() {
            return Err(Error::Problem(format!("level {n} sizes differ after the round trip")));
        }
        worst = worst.max(linalg::op_norm(&(lhs - rhs)));
    }
    Ok(worst)
}

/// Input document for tree embeddings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeInputDoc {
    pub degree_cap: usize,
    pub trees: Vec<TreeDoc>,
    #[serde(default)]
    pub product_weights: Vec<ProductWeightDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeDoc {
    pub parent: Vec<Option<usize>>,
    #[serde(default)]
    pub weights: Vec<VertexWeightDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexWeightDoc {
    pub v: usize,
    pub value: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductWeightDoc {
    pub j: usize,
    pub v: Vec<usize>,
    pub value: [f64; 2],
}

impl TreeInputDoc {
    /// The product and its weights; missing vertex weights default to one.
    pub fn build(&self) -> Result<(TreeProduct, ExplicitWeights)> {
        let trees = self
            .trees
            .iter()
            .map(|t| RootedTree::new(t.parent.clone()))
            .collect::<Result<Vec<_>>>()?;
        let product = TreeProduct::new(trees)?;
        let mut base = product.unit_weights();
        for (k, t) in self.trees.iter().enumerate() {
            for w in &t.weights {
                if w.v >= t.parent.len() || t.parent[w.v].is_none() {
                    return Err(Error::Tree(format!("tree {k}: weight on vertex {} which is not a non-root vertex", w.v)));
                }
                base.per_tree[k][w.v] = c64(w.value[0], w.value[1]);
            }
        }
        let mut overrides = BTreeMap::new();
        for w in &self.product_weights {
            if w.j == 0 || w.j > product.dim() || w.v.len() != product.dim() {
                return Err(Error::Tree(format!("product weight j={} v={:?} has the wrong shape", w.j, w.v)));
            }
            overrides.insert((w.j - 1, w.v.clone()), c64(w.value[0], w.value[1]));
        }
        Ok((product, ExplicitWeights { base, overrides }))
    }
}

/// Input document for the one-variable decomposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasesDoc {
    pub bases: Vec<Vec<Vec<[f64; 2]>>>,
    pub partition: Vec<Vec<Vec<usize>>>,
}
