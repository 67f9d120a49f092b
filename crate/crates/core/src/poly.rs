//! Sparse multivariate polynomials with real coefficients.

use crate::multi_index::MultiIndex;
use crate::numeric::CompensatedSum;
use num_complex::Complex64;
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    n_vars: usize,
    /// Sorted by exponent, no duplicates, no zero coefficients.
    terms: Vec<(MultiIndex, f64)>,
    max_exp: Vec<u32>,
}

/// Scratch power table reused across evaluations.
#[derive(Debug, Default, Clone)]
pub struct PowerTable {
    powers: Vec<Vec<Complex64>>,
}

impl PowerTable {
    fn fill(&mut self, z: &[Complex64], max_exp: &[u32]) {
        self.powers.resize_with(z.len(), Vec::new);
        for ((row, &zi), &e) in self.powers.iter_mut().zip(z).zip(max_exp) {
            row.clear();
            let mut acc = Complex64::new(1.0, 0.0);
            row.push(acc);
            for _ in 0..e {
                acc *= zi;
                row.push(acc);
            }
        }
    }
}

impl Poly {
    pub fn zero(n_vars: usize) -> Self {
        Poly {
            n_vars,
            terms: Vec::new(),
            max_exp: vec![0; n_vars],
        }
    }

    pub fn constant(n_vars: usize, c: f64) -> Self {
        Poly::from_terms(n_vars, vec![(MultiIndex::zero(n_vars), c)])
    }

    /// Builds a polynomial, merging repeated exponents and dropping exact zeros.
    pub fn from_terms(n_vars: usize, terms: impl IntoIterator<Item = (MultiIndex, f64)>) -> Self {
        let mut map: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        for (k, c) in terms {
            assert_eq!(k.len(), n_vars, "exponent length mismatch");
            *map.entry(k).or_insert(0.0) += c;
        }
        let terms: Vec<_> = map.into_iter().filter(|(_, c)| *c != 0.0).collect();
        let mut max_exp = vec![0; n_vars];
        for (k, _) in &terms {
            for (m, &e) in max_exp.iter_mut().zip(k.entries()) {
                *m = (*m).max(e);
            }
        }
        Poly {
            n_vars,
            terms,
            max_exp,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn terms(&self) -> &[(MultiIndex, f64)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|(k, _)| k.degree()).max().unwrap_or(0)
    }

    pub fn coefficient(&self, k: &MultiIndex) -> f64 {
        self.terms
            .binary_search_by(|(t, _)| t.cmp(k))
            .map(|i| self.terms[i].1)
            .unwrap_or(0.0)
    }

    pub fn constant_term(&self) -> f64 {
        self.coefficient(&MultiIndex::zero(self.n_vars))
    }

    /// Coefficients of the degree-one terms, indexed by variable.
    pub fn linear_part(&self) -> Vec<f64> {
        (0..self.n_vars)
            .map(|j| self.coefficient(&MultiIndex::unit(self.n_vars, j)))
            .collect()
    }

    /// Keeps only terms of total degree strictly above `degree`.
    pub fn without_degree_at_most(&self, degree: u32) -> Poly {
        Poly::from_terms(
            self.n_vars,
            self.terms
                .iter()
                .filter(|(k, _)| k.degree() > degree)
                .cloned(),
        )
    }

    pub fn truncated(&self, degree: u32) -> Poly {
        Poly::from_terms(
            self.n_vars,
            self.terms
                .iter()
                .filter(|(k, _)| k.degree() <= degree)
                .cloned(),
        )
    }

    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        let mut table = PowerTable::default();
        self.eval_with(z, &mut table)
    }

    /// Evaluation with a caller-owned power table (no allocation once warm).
    pub fn eval_with(&self, z: &[Complex64], table: &mut PowerTable) -> Complex64 {
        debug_assert_eq!(z.len(), self.n_vars);
        table.fill(z, &self.max_exp);
        let mut acc = CompensatedSum::default();
        for (k, c) in &self.terms {
            let mut t = Complex64::new(*c, 0.0);
            for (row, &e) in table.powers.iter().zip(k.entries()) {
                if e > 0 {
                    t *= row[e as usize];
                }
            }
            acc.add(t);
        }
        acc.value()
    }

    pub fn eval_real(&self, z: &[f64]) -> f64 {
        let zc: Vec<Complex64> = z.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.eval(&zc).re
    }

    /// Sum of all coefficients, i.e. the value at the all-ones vector.
    pub fn coefficient_sum(&self) -> f64 {
        let mut s = CompensatedSum::default();
        for (_, c) in &self.terms {
            s.add(Complex64::new(*c, 0.0));
        }
        s.value().re
    }

    pub fn add(&self, other: &Poly) -> Poly {
        Poly::from_terms(
            self.n_vars,
            self.terms.iter().chain(other.terms.iter()).cloned(),
        )
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly::from_terms(self.n_vars, self.terms.iter().map(|(k, c)| (k.clone(), c * s)))
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (ka, ca) in &self.terms {
            for (kb, cb) in &other.terms {
                out.push((ka.add(kb), ca * cb));
            }
        }
        Poly::from_terms(self.n_vars, out)
    }

    /// Linear form `sum_j w_j y_j`.
    pub fn linear(w: &[f64]) -> Poly {
        let n = w.len();
        Poly::from_terms(
            n,
            w.iter()
                .enumerate()
                .map(|(j, &c)| (MultiIndex::unit(n, j), c)),
        )
    }

    /// The polynomial `y -> self(1 - y)`, expanded exactly by the binomial
    /// theorem in each variable.
    pub fn shifted_to_one(&self) -> Poly {
        let mut out = Vec::new();
        for (k, c) in &self.terms {
            // expand prod_j (1 - y_j)^{k_j}
            let mut partial: Vec<(Vec<u32>, f64)> = vec![(Vec::with_capacity(self.n_vars), *c)];
            for &kj in k.entries() {
                let binom = binomial_row(kj);
                let mut next = Vec::with_capacity(partial.len() * (kj as usize + 1));
                for (exps, coef) in &partial {
                    for (l, &bl) in binom.iter().enumerate() {
                        let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
                        let mut e = exps.clone();
                        e.push(l as u32);
                        next.push((e, coef * bl * sign));
                    }
                }
                partial = next;
            }
            out.extend(partial.into_iter().map(|(e, c)| (MultiIndex::new(e), c)));
        }
        Poly::from_terms(self.n_vars, out)
    }

    /// Taylor coefficients of `num / den` at the origin up to total degree
    /// `degree`, by the usual recursive series division.
    pub fn series_quotient(num: &Poly, den: &Poly, degree: u32) -> Option<Poly> {
        let n = num.n_vars;
        let d0 = den.constant_term();
        if d0 == 0.0 {
            return None;
        }
        let mut coeffs: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        for d in 0..=degree {
            for m in MultiIndex::all_of_degree(n, d) {
                let mut s = num.coefficient(&m);
                for (k, dk) in &den.terms {
                    if k.degree() == 0 || !k.le(&m) {
                        continue;
                    }
                    let rest = m.checked_sub(k).expect("k <= m");
                    if let Some(c) = coeffs.get(&rest) {
                        s -= dk * c;
                    }
                }
                coeffs.insert(m, s / d0);
            }
        }
        Some(Poly::from_terms(n, coeffs))
    }
}

fn binomial_row(n: u32) -> Vec<f64> {
    let mut row = vec![1.0f64; n as usize + 1];
    for k in 1..n as usize {
        row[k] = row[k - 1] * (n as usize - k + 1) as f64 / k as f64;
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex::new(v.to_vec())
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn shift_matches_direct_substitution() {
        let p = Poly::from_terms(
            2,
            vec![(mi(&[1, 0]), 1.0 / 3.0), (mi(&[0, 2]), 2.0 / 3.0), (mi(&[3, 1]), 0.5)],
        );
        let s = p.shifted_to_one();
        for y in [[c(0.1, 0.2), c(-0.3, 0.05)], [c(0.7, 0.0), c(0.2, -0.4)]] {
            let z = [c(1.0, 0.0) - y[0], c(1.0, 0.0) - y[1]];
            assert!((p.eval(&z) - s.eval(&y)).norm() < 1e-14);
        }
    }

    #[test]
    fn series_quotient_of_geometric() {
        // z / (2 - z) = sum_{k>=1} z^k / 2^k
        let num = Poly::from_terms(1, vec![(mi(&[1]), 1.0)]);
        let den = Poly::from_terms(1, vec![(mi(&[0]), 2.0), (mi(&[1]), -1.0)]);
        let q = Poly::series_quotient(&num, &den, 10).unwrap();
        for k in 1..=10u32 {
            assert!((q.coefficient(&mi(&[k])) - 0.5f64.powi(k as i32)).abs() < 1e-15);
        }
        assert_eq!(q.constant_term(), 0.0);
    }

    #[test]
    fn product_and_difference() {
        let a = Poly::linear(&[1.0, 2.0]);
        let b = Poly::constant(2, 1.0).add(&Poly::linear(&[0.0, -1.0]));
        let ab = a.mul(&b);
        let z = [c(0.3, 0.1), c(-0.2, 0.5)];
        assert!((ab.eval(&z) - a.eval(&z) * b.eval(&z)).norm() < 1e-15);
        assert!(a.sub(&a).is_zero());
    }

    #[test]
    fn low_degree_filter() {
        let p = Poly::from_terms(
            2,
            vec![(mi(&[0, 0]), 1.0), (mi(&[1, 0]), 2.0), (mi(&[1, 1]), 3.0)],
        );
        let hi = p.without_degree_at_most(1);
        assert_eq!(hi.terms().len(), 1);
        assert_eq!(hi.coefficient(&mi(&[1, 1])), 3.0);
        assert_eq!(p.linear_part(), vec![2.0, 0.0]);
    }
}
