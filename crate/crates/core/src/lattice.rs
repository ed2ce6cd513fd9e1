//! Multi-indices in `N^d` and the graded truncation `{alpha : |alpha| <= N}`.
//!
//! Axes are zero-based in the Rust API (`0..d`); the JSON and CLI surfaces
//! use one-based axes.

use std::cmp::Ordering;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point `alpha` of the lattice `N^d`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(components: Vec<usize>) -> Self {
        assert!(!components.is_empty(), "multi-index needs d >= 1");
        MultiIndex(components)
    }

    pub fn zero(d: usize) -> Self {
        MultiIndex::new(vec![0; d])
    }

    /// The unit vector `e_j`.
    pub fn unit(d: usize, j: usize) -> Self {
        let mut v = vec![0; d];
        v[j] = 1;
        MultiIndex::new(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[usize] {
        &self.0
    }

    pub fn get(&self, j: usize) -> usize {
        self.0[j]
    }

    /// Total degree `|alpha|`.
    pub fn degree(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&a| a == 0)
    }

    pub fn add_unit(&self, j: usize) -> MultiIndex {
        let mut v = self.0.clone();
        v[j] += 1;
        MultiIndex(v)
    }

    /// `alpha - e_j`, or `None` when `alpha_j = 0` (the point leaves the
    /// lattice; callers treat it as the zero space).
    pub fn sub_unit(&self, j: usize) -> Option<MultiIndex> {
        if self.0[j] == 0 {
            return None;
        }
        let mut v = self.0.clone();
        v[j] -= 1;
        Some(MultiIndex(v))
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `self - other` when `other <= self` componentwise.
    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.checked_sub(*b))
            .collect::<Option<Vec<_>>>()
            .map(MultiIndex)
    }

    /// Componentwise `self <= other`.
    pub fn le(&self, other: &MultiIndex) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// `alpha!` as a float.
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&a| factorial(a)).product()
    }

    /// Multinomial coefficient `|alpha|! / alpha!`.
    pub fn multinomial(&self) -> f64 {
        factorial(self.degree()) / self.factorial()
    }

    /// The monomial `w^alpha` with the convention `0^0 = 1`.
    pub fn monomial(&self, w: &[Complex64]) -> Complex64 {
        debug_assert_eq!(w.len(), self.dim());
        self.0
            .iter()
            .zip(w)
            .fold(Complex64::new(1.0, 0.0), |acc, (&a, z)| acc * z.powu(a as u32))
    }

    /// Graded order: by degree, then descending lexicographic, so that
    /// `(1,0)` precedes `(0,1)`.
    pub fn graded_cmp(&self, other: &MultiIndex) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

impl From<Vec<usize>> for MultiIndex {
    fn from(v: Vec<usize>) -> Self {
        MultiIndex::new(v)
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Number of ways to write `total` as an ordered sum of `parts` nonnegative
/// integers.
fn compositions(total: usize, parts: usize) -> usize {
    if parts == 0 {
        return usize::from(total == 0);
    }
    binomial(total + parts - 1, parts - 1)
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

/// The finite window `Lambda_N = {alpha in N^d : |alpha| <= N}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationBox {
    d: usize,
    cap: usize,
}

impl TruncationBox {
    pub fn new(d: usize, cap: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidBox("dimension d must be at least 1".into()));
        }
        if cap == 0 {
            return Err(Error::InvalidBox("degree cap N must be at least 1".into()));
        }
        Ok(TruncationBox { d, cap })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn contains(&self, alpha: &MultiIndex) -> bool {
        alpha.dim() == self.d && alpha.degree() <= self.cap
    }

    /// `|alpha| <= N - margin`.
    pub fn interior(&self, alpha: &MultiIndex, margin: usize) -> bool {
        alpha.dim() == self.d && margin <= self.cap && alpha.degree() <= self.cap - margin
    }

    /// `|Lambda_N| = C(N + d, d)`.
    pub fn len(&self) -> usize {
        self.count_up_to(self.cap)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of points with degree at most `k`.
    pub fn count_up_to(&self, k: usize) -> usize {
        binomial(k + self.d, self.d)
    }

    /// All points of degree exactly `k`, in graded order.
    pub fn layer(&self, k: usize) -> Vec<MultiIndex> {
        let mut out = Vec::with_capacity(compositions(k, self.d));
        let mut buf = vec![0; self.d];
        fill_layer(&mut buf, 0, k, &mut out);
        out
    }

    /// All points in graded order; `enumerate()[rank(alpha)] == alpha`.
    pub fn enumerate(&self) -> Vec<MultiIndex> {
        (0..=self.cap).flat_map(|k| self.layer(k)).collect()
    }

    /// Storage offset of `alpha` in graded order.
    pub fn rank(&self, alpha: &MultiIndex) -> Option<usize> {
        if !self.contains(alpha) {
            return None;
        }
        Some(rank_unbounded(alpha))
    }

    pub fn unrank(&self, index: usize) -> Option<MultiIndex> {
        if index >= self.len() {
            return None;
        }
        let d = self.d;
        let mut k = 0;
        while binomial(k + d, d) <= index {
            k += 1;
        }
        let mut pos = index - if k == 0 { 0 } else { binomial(k - 1 + d, d) };
        let mut comps = vec![0; d];
        let mut rem = k;
        for (i, slot) in comps.iter_mut().enumerate().take(d - 1) {
            // Descending lexicographic: try the largest component first.
            let mut b = rem;
            loop {
                let block = compositions(rem - b, d - i - 1);
                if pos < block {
                    break;
                }
                pos -= block;
                b -= 1;
            }
            *slot = b;
            rem -= b;
        }
        comps[d - 1] = rem;
        Some(MultiIndex(comps))
    }
}

fn fill_layer(buf: &mut [usize], i: usize, rem: usize, out: &mut Vec<MultiIndex>) {
    let d = buf.len();
    if i == d - 1 {
        buf[i] = rem;
        out.push(MultiIndex(buf.to_vec()));
        return;
    }
    for b in (0..=rem).rev() {
        buf[i] = b;
        fill_layer(buf, i + 1, rem - b, out);
    }
}

fn rank_unbounded(alpha: &MultiIndex) -> usize {
    let d = alpha.dim();
    let k = alpha.degree();
    let before = if k == 0 { 0 } else { binomial(k - 1 + d, d) };
    let mut pos = 0;
    let mut rem = k;
    for i in 0..d.saturating_sub(1) {
        let a = alpha.0[i];
        for b in (a + 1)..=rem {
            pos += compositions(rem - b, d - i - 1);
        }
        rem -= a;
    }
    before + pos
}
