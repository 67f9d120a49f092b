//! Exponent vectors and the dense storage layout used for truncated
//! multivariate series.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;

/// A vector of nonnegative exponents (an offspring vector or a series
/// exponent). Its degree is the sum of the entries.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        MultiIndex(entries)
    }

    pub fn zero(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    /// The j-th unit vector of length `n`.
    pub fn unit(n: usize, j: usize) -> Self {
        let mut e = vec![0; n];
        e[j] = 1;
        MultiIndex(e)
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Componentwise `self <= other`.
    pub fn le(&self, other: &MultiIndex) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.checked_sub(*b))
            .collect::<Option<Vec<_>>>()
            .map(MultiIndex)
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `z^m = prod z_i^{m_i}`.
    pub fn monomial(&self, z: &[Complex64]) -> Complex64 {
        self.0
            .iter()
            .zip(z)
            .fold(Complex64::new(1.0, 0.0), |acc, (&e, &zi)| acc * zi.powu(e))
    }

    /// `sum m_i * w_i`, e.g. `m . ln(mu)`.
    pub fn dot(&self, w: &[Complex64]) -> Complex64 {
        self.0
            .iter()
            .zip(w)
            .map(|(&e, &wi)| wi * e as f64)
            .sum()
    }

    /// All indices of `n` entries with the given total degree, in ascending
    /// lexicographic order.
    pub fn all_of_degree(n: usize, degree: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; n];
        fill_degree(&mut cur, 0, degree, &mut out);
        out
    }

    /// All nonzero indices with total degree at most `cap`, by ascending
    /// degree and lexicographically within a degree.
    pub fn up_to_degree(n: usize, cap: u32) -> Vec<MultiIndex> {
        (1..=cap).flat_map(|d| Self::all_of_degree(n, d)).collect()
    }
}

fn fill_degree(cur: &mut Vec<u32>, pos: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    let n = cur.len();
    if n == 0 {
        return;
    }
    if pos == n - 1 {
        cur[pos] = remaining;
        out.push(MultiIndex(cur.clone()));
        return;
    }
    for v in 0..=remaining {
        cur[pos] = v;
        fill_degree(cur, pos + 1, remaining - v, out);
    }
    cur[pos] = 0;
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|e| e.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(v: Vec<u32>) -> Self {
        MultiIndex(v)
    }
}

/// Flat indexing of all exponent vectors inside the box `[0, cap]^n`.
///
/// Truncated series are stored densely in this box; cells with total degree
/// above `cap` are simply never touched.
#[derive(Debug, Clone)]
pub struct DenseLayout {
    n: usize,
    cap: u32,
    strides: Vec<usize>,
    len: usize,
}

impl DenseLayout {
    pub fn new(n: usize, cap: u32) -> Self {
        let side = cap as usize + 1;
        let mut strides = Vec::with_capacity(n);
        let mut s = 1usize;
        for _ in 0..n {
            strides.push(s);
            s *= side;
        }
        DenseLayout {
            n,
            cap,
            strides,
            len: s,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn offset(&self, m: &[u32]) -> usize {
        m.iter().zip(&self.strides).map(|(&e, &s)| e as usize * s).sum()
    }

    pub fn contains(&self, m: &[u32]) -> bool {
        m.len() == self.n && m.iter().sum::<u32>() <= self.cap
    }
}
