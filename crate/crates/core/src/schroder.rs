//! The Schröder function Φ, with `Φ(P(z)) = M·Φ(z)`, and the Taylor
//! coefficients of its inverse `Ψ(z) = Φ⁻¹(C z)`, which satisfies
//! `Ψ(diag(μ) z) = P(Ψ(z))`.

use crate::error::{Error, Result};
use crate::model::{EvalScratch, LocalExpansion, PgfModel};
use crate::multi_index::{DenseLayout, MultiIndex};
use crate::numeric::{complex_matvec, max_abs, real_matvec, CompensatedSum};
use crate::spectral::SpectralData;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::collections::BTreeSet;
use std::fmt::Write as _;

pub const DEFAULT_PHI_ITERATIONS: usize = 250;
pub const DEFAULT_DEGREE_CAP: u32 = 40;
pub const DEFAULT_INITIAL_SCALE: f64 = 0.5;
/// Largest scaled coefficient accepted when choosing `r`.
pub const SCALED_BOUND: f64 = 1e6;
const RESONANCE_TOL: f64 = 1e-12;
/// Iterates beyond this size are taken as escaping the basin of the origin.
const ESCAPE: f64 = 1e8;

#[derive(Debug, Clone)]
pub struct SchroderEvaluator {
    at_zero: LocalExpansion,
    m: DMatrix<f64>,
    c: DMatrix<Complex64>,
    c_inv: DMatrix<Complex64>,
    inv_mu: Vec<Complex64>,
    iterations: usize,
}

impl SchroderEvaluator {
    pub fn new(model: &PgfModel, spectral: &SpectralData, iterations: usize) -> Result<Self> {
        if iterations == 0 {
            return Err(Error::Domain("iteration count must be at least 1".into()));
        }
        spectral.require_condition_d()?;
        let at_zero = model.expansion_at_zero();
        Ok(SchroderEvaluator {
            m: at_zero.linear.clone(),
            at_zero,
            c: spectral.c.clone(),
            c_inv: spectral.c_inv.clone(),
            inv_mu: spectral.mu.iter().map(|m| 1.0 / m).collect(),
            iterations,
        })
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// `C⁻¹·Φ(z)`: the limit of `diag(μ)^{−t}·C⁻¹·Pᵗ(z)`, accumulated as a
    /// sum of increments `diag(μ)^{−t−1}·C⁻¹·Q₁(Pᵗ(z))`. Stops early once
    /// the increments fall below rounding.
    pub fn phi_eigen(&self, z: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = z.len();
        let mut scratch = EvalScratch::default();
        let mut y = z.to_vec();
        let mut u = vec![Complex64::default(); n];
        complex_matvec(&self.c_inv, z, &mut u);
        let mut q = vec![Complex64::default(); n];
        let mut cq = vec![Complex64::default(); n];
        let mut my = vec![Complex64::default(); n];
        let mut scale: Vec<Complex64> = vec![Complex64::new(1.0, 0.0); n];
        let mut growth = 0usize;
        let mut prev_inc = f64::INFINITY;
        for _ in 0..self.iterations {
            if max_abs(&y) == 0.0 {
                break;
            }
            self.at_zero.eval_higher_into(&y, &mut q, &mut scratch)?;
            complex_matvec(&self.c_inv, &q, &mut cq);
            let mut inc = 0.0f64;
            for i in 0..n {
                scale[i] *= self.inv_mu[i];
                let d = cq[i] * scale[i];
                inc = inc.max(d.norm());
                u[i] += d;
            }
            if !inc.is_finite() {
                return Err(Error::numeric("Schröder recurrence overflowed"));
            }
            if inc <= f64::EPSILON * 0.125 * max_abs(&u) {
                break;
            }
            // persistent growth of the increments means no contraction
            if inc > prev_inc {
                growth += 1;
                if growth >= 16 && inc > 1.0 {
                    return Err(Error::numeric(
                        "Schröder increments grow: z is outside the basin or the \
                         contraction margin is too small",
                    ));
                }
            } else {
                growth = 0;
            }
            prev_inc = inc;
            real_matvec(&self.m, &y, &mut my);
            for i in 0..n {
                y[i] = my[i] + q[i];
            }
            if !(max_abs(&y) < ESCAPE) {
                return Err(Error::numeric(
                    "iterates of P escape: argument is outside the basin of the origin",
                ));
            }
        }
        Ok(u)
    }

    /// `Φ(z)`.
    pub fn phi_eval(&self, z: &[Complex64]) -> Result<Vec<Complex64>> {
        let u = self.phi_eigen(z)?;
        let mut out = vec![Complex64::default(); u.len()];
        complex_matvec(&self.c, &u, &mut out);
        Ok(out)
    }
}

/// Taylor coefficients of `Ψ`, stored scaled as `r^|m|·ψ_m` for all
/// `1 ≤ |m| ≤ cap`.
#[derive(Debug, Clone)]
pub struct TaylorTable {
    n: usize,
    cap: u32,
    r: f64,
    layout: DenseLayout,
    /// `series[j][offset(m)]` is component `j` of the scaled `ψ_m`.
    series: Vec<Vec<Complex64>>,
    indices: Vec<MultiIndex>,
}

impl TaylorTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree_cap(&self) -> u32 {
        self.cap
    }

    pub fn scale(&self) -> f64 {
        self.r
    }

    /// All stored multi-indices, by ascending degree.
    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    /// `r^|m|·ψ_m`.
    pub fn scaled(&self, m: &MultiIndex) -> Vec<Complex64> {
        assert!(m.degree() >= 1 && m.degree() <= self.cap, "index {m} outside table");
        let off = self.layout.offset(m.entries());
        self.series.iter().map(|s| s[off]).collect()
    }

    /// `ψ_m` itself (may overflow for large degrees and small `r`).
    pub fn coefficient(&self, m: &MultiIndex) -> Vec<Complex64> {
        let f = self.r.powi(-(m.degree() as i32));
        self.scaled(m).into_iter().map(|v| v * f).collect()
    }

    pub fn max_scaled(&self) -> f64 {
        self.indices
            .iter()
            .map(|m| max_abs(&self.scaled(m)))
            .fold(0.0, f64::max)
    }

    /// Truncated series `Σ ψ_m z^m`, summed by ascending degree.
    pub fn psi_eval_truncated(&self, z: &[Complex64]) -> Vec<Complex64> {
        let w: Vec<Complex64> = z.iter().map(|v| v / self.r).collect();
        let mut acc = vec![CompensatedSum::default(); self.n];
        for m in &self.indices {
            let mono = m.monomial(&w);
            let off = self.layout.offset(m.entries());
            for (a, s) in acc.iter_mut().zip(&self.series) {
                a.add(s[off] * mono);
            }
        }
        acc.iter().map(|a| a.value()).collect()
    }

    /// CSV dump: `m,component,re,im` of the scaled entries.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,component,re,im\n");
        for m in &self.indices {
            let key = m
                .entries()
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(" ");
            for (j, v) in self.scaled(m).iter().enumerate() {
                let _ = writeln!(out, "{key},{},{:.17e},{:.17e}", j + 1, v.re, v.im);
            }
        }
        out
    }
}

/// Coefficients of `Ψ` up to total degree `cap`: degree one holds the
/// columns of `C`, higher degrees solve `(μ^m·I − M)·ψ_m = [z^m] Q₁(Ψ)`.
///
/// With `r = None` the scale starts at 0.5 and is halved until every scaled
/// entry is at most `SCALED_BOUND`.
pub fn psi_coefficients(
    model: &PgfModel,
    spectral: &SpectralData,
    cap: u32,
    r: Option<f64>,
) -> Result<TaylorTable> {
    model.ensure_polynomial("Taylor coefficients of the inverse Schröder function")?;
    spectral.require_condition_d()?;
    if cap == 0 {
        return Err(Error::Domain("degree cap must be at least 1".into()));
    }
    let r0 = match r {
        Some(v) if v > 0.0 && v.is_finite() => v,
        Some(v) => return Err(Error::Domain(format!("scale r = {v} must be positive"))),
        None => DEFAULT_INITIAL_SCALE,
    };
    let mut table = build_table(model, spectral, cap, r0)?;
    if r.is_none() {
        while table.max_scaled() > SCALED_BOUND {
            table.r *= 0.5;
            for m in &table.indices {
                let off = table.layout.offset(m.entries());
                let f = 0.5f64.powi(m.degree() as i32);
                for s in table.series.iter_mut() {
                    s[off] *= f;
                }
            }
        }
    }
    Ok(table)
}

fn build_table(model: &PgfModel, sd: &SpectralData, cap: u32, r: f64) -> Result<TaylorTable> {
    let n = model.n();
    let layout = DenseLayout::new(n, cap);
    let at_zero = model.expansion_at_zero();
    let remainders: Vec<&crate::poly::Poly> = at_zero.higher.iter().map(|h| &h.num).collect();

    // product chains S_k = S_{k - e_j} · Ψ_j for every monomial k in Q1
    let mut needed: BTreeSet<(u32, MultiIndex)> = BTreeSet::new();
    for p in &remainders {
        for (k, _) in p.terms() {
            let mut k = k.clone();
            while k.degree() >= 2 {
                needed.insert((k.degree(), k.clone()));
                let j = last_nonzero(&k);
                k = k.checked_sub(&MultiIndex::unit(n, j)).expect("positive entry");
            }
        }
    }
    let chain: Vec<(MultiIndex, MultiIndex, usize)> = needed
        .into_iter()
        .map(|(_, k)| {
            let j = last_nonzero(&k);
            let parent = k.checked_sub(&MultiIndex::unit(n, j)).unwrap();
            (k, parent, j)
        })
        .collect();
    let mut products: Vec<Vec<Complex64>> = vec![vec![Complex64::default(); layout.len()]; chain.len()];
    let chain_pos = |k: &MultiIndex| chain.iter().position(|(c, _, _)| c == k);

    let mut series = vec![vec![Complex64::default(); layout.len()]; n];
    let mut indices = Vec::new();
    for j in 0..n {
        let e = MultiIndex::unit(n, j);
        let off = layout.offset(e.entries());
        for i in 0..n {
            series[i][off] = sd.c[(i, j)] * r;
        }
        indices.push(e);
    }
    let mc = sd.m_matrix.map(|v| Complex64::new(v, 0.0));
    let eye = DMatrix::<Complex64>::identity(n, n);

    for d in 2..=cap {
        let level = MultiIndex::all_of_degree(n, d);
        // degree-d coefficients of each product from strictly lower data
        for (ci, (k, parent, j)) in chain.iter().enumerate() {
            let kd = k.degree();
            if d < kd {
                continue;
            }
            let parent_pos = if parent.degree() >= 2 {
                Some(chain_pos(parent).expect("chain closed under parents"))
            } else {
                None
            };
            for m in &level {
                let mut acc = CompensatedSum::default();
                for_each_below(m, |b, a| {
                    // b carries the Ψ_j factor, a = m - b the parent factor
                    let (bd, ad) = (deg(b), deg(a));
                    if bd == 0 || ad + 1 < kd {
                        return;
                    }
                    let pv = match parent_pos {
                        Some(p) => products[p][layout.offset(a)],
                        None => series[last_nonzero_slice(parent.entries())][layout.offset(a)],
                    };
                    if pv == Complex64::default() {
                        return;
                    }
                    acc.add(pv * series[*j][layout.offset(b)]);
                });
                products[ci][layout.offset(m.entries())] = acc.value();
            }
        }
        for m in &level {
            let off = layout.offset(m.entries());
            let mu_m = sd.ln_mu_power(m.entries()).exp();
            for (i, mu) in sd.mu.iter().enumerate() {
                if (mu_m - mu).norm() < RESONANCE_TOL * mu.norm() {
                    return Err(Error::numeric(format!(
                        "resonance: mu^{m} is within tolerance of mu_{}",
                        i + 1
                    )));
                }
            }
            let rhs = DVector::from_iterator(
                n,
                remainders.iter().map(|p| {
                    let mut acc = CompensatedSum::default();
                    for (k, coef) in p.terms() {
                        let pos = chain_pos(k).expect("monomial in chain");
                        acc.add(products[pos][off] * *coef);
                    }
                    acc.value()
                }),
            );
            let a = &eye * mu_m - &mc;
            let x = a
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::numeric(format!("singular system at index {m}")))?;
            for i in 0..n {
                series[i][off] = x[i];
            }
            indices.push(m.clone());
        }
    }
    Ok(TaylorTable {
        n,
        cap,
        r,
        layout,
        series,
        indices,
    })
}

fn deg(m: &[u32]) -> u32 {
    m.iter().sum()
}

fn last_nonzero(k: &MultiIndex) -> usize {
    last_nonzero_slice(k.entries())
}

fn last_nonzero_slice(k: &[u32]) -> usize {
    k.iter().rposition(|&v| v > 0).expect("nonzero index")
}

/// Calls `f(b, m − b)` for every `b ≤ m` componentwise.
fn for_each_below(m: &MultiIndex, mut f: impl FnMut(&[u32], &[u32])) {
    let top = m.entries();
    let n = top.len();
    let mut b = vec![0u32; n];
    let mut a = top.to_vec();
    loop {
        f(&b, &a);
        let mut i = 0;
        loop {
            if i == n {
                return;
            }
            if b[i] < top[i] {
                b[i] += 1;
                a[i] -= 1;
                break;
            }
            b[i] = 0;
            a[i] = top[i];
            i += 1;
        }
    }
}
