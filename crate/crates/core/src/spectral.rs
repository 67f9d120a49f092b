//! Perron–Frobenius data of the mean matrix, eigendecomposition of the
//! linear part at the origin, and the hypothesis checks built on them.

use crate::error::{Condition, Error, Result};
use crate::model::PgfModel;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use std::cmp::Ordering;
use std::f64::consts::FRAC_PI_2;

pub const PERRON_TOL: f64 = 1e-14;
pub const PERRON_MAX_ITERS: usize = 10_000;
/// Largest accepted condition number of the eigenvector matrix.
pub const DEFECTIVE_COND: f64 = 1e8;
pub const RECONSTRUCTION_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SpectralData {
    pub mean_matrix: DMatrix<f64>,
    pub perron: f64,
    pub left: DVector<f64>,
    pub right: DVector<f64>,
    pub m_matrix: DMatrix<f64>,
    pub mu: Vec<Complex64>,
    pub ln_mu: Vec<Complex64>,
    pub c: DMatrix<Complex64>,
    pub c_inv: DMatrix<Complex64>,
    pub nu: Vec<Complex64>,
    /// `conj_perm[i] = j` when `μ_j = conj(μ_i)`; fixed points are real.
    pub conj_perm: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Eigen {
    pub mu: Vec<Complex64>,
    pub c: DMatrix<Complex64>,
    pub c_inv: DMatrix<Complex64>,
    pub conj_perm: Vec<usize>,
}

impl SpectralData {
    pub fn compute(model: &PgfModel) -> Result<Self> {
        let mean_matrix = model.mean_matrix();
        let (perron, left, right) = perron_data(&mean_matrix)?;
        let m_matrix = model.linear_part_at_zero();
        let eig = m_eigendecomposition(&m_matrix)?;
        let ln_e = perron.ln();
        let ln_mu: Vec<Complex64> = eig.mu.iter().map(|m| m.ln()).collect();
        let nu = ln_mu.iter().map(|l| -l / ln_e).collect();
        Ok(SpectralData {
            mean_matrix,
            perron,
            left,
            right,
            m_matrix,
            mu: eig.mu,
            ln_mu,
            c: eig.c,
            c_inv: eig.c_inv,
            nu,
            conj_perm: eig.conj_perm,
        })
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn ln_perron(&self) -> f64 {
        self.perron.ln()
    }

    /// `|μ₁| - |μ_N|²`; positive exactly when condition (D) holds.
    pub fn condition_d_margin(&self) -> f64 {
        let lo = self.mu[0].norm();
        let hi = self.mu[self.n() - 1].norm();
        lo - hi * hi
    }

    pub fn require_condition_d(&self) -> Result<()> {
        let lo = self.mu[0].norm();
        let hi = self.mu[self.n() - 1].norm();
        if hi * hi < lo {
            Ok(())
        } else {
            Err(Error::validation(
                Condition::D,
                format!("|mu_N|^2 = {} is not below |mu_1| = {lo}", hi * hi),
            ))
        }
    }

    /// Principal logarithm of `μ^m`, summed per component.
    pub fn ln_mu_power(&self, m: &[u32]) -> Complex64 {
        m.iter()
            .zip(&self.ln_mu)
            .map(|(&k, l)| l * k as f64)
            .sum()
    }
}

/// Perron root and positive eigenvectors of a strictly positive matrix.
///
/// `b` is the last column of `adj(E I - mean)` and `a` is scaled so that
/// `a·b = 1`; for two types this gives `b = (E_12, E - E_11)`.
pub fn perron_data(mean: &DMatrix<f64>) -> Result<(f64, DVector<f64>, DVector<f64>)> {
    let n = mean.nrows();
    if n == 0 || mean.ncols() != n {
        return Err(Error::Domain("mean matrix must be square and nonempty".into()));
    }
    for ((i, j), v) in mean.iter().enumerate().map(|(k, v)| ((k % n, k / n), v)) {
        if !(v.is_finite() && *v > 0.0) {
            return Err(Error::validation(
                Condition::B,
                format!("mean matrix entry ({}, {}) = {v} is not positive", i + 1, j + 1),
            ));
        }
    }
    let b0 = power_iteration(mean)?;
    let a0 = power_iteration(&mean.transpose())?;
    let e = a0.dot(&(mean * &b0)) / a0.dot(&b0);
    if !(e > 1.0) {
        return Err(Error::validation(
            Condition::B,
            format!("Perron root {e} does not exceed 1: process is not supercritical"),
        ));
    }
    let adj = last_adjugate_column(&(DMatrix::identity(n, n) * e - mean));
    let s = adj.dot(&b0) / b0.dot(&b0);
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::numeric("degenerate adjugate while normalising Perron vector"));
    }
    // the adjugate column is exact up to the error in e, which the Rayleigh
    // quotient makes second order
    let b = if adj.iter().all(|v| *v > 0.0) { adj } else { b0 * s };
    let a = &a0 / a0.dot(&b);
    Ok((e, a, b))
}

fn power_iteration(a: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..PERRON_MAX_ITERS {
        let mut y = a * &x;
        let s = y.sum();
        y /= s;
        let diff = (&y - &x).amax() / y.amax();
        x = y;
        if diff <= PERRON_TOL {
            return Ok(x);
        }
    }
    Err(Error::numeric("power iteration did not converge"))
}

fn last_adjugate_column(b: &DMatrix<f64>) -> DVector<f64> {
    let n = b.nrows();
    if n == 1 {
        return DVector::from_element(1, 1.0);
    }
    DVector::from_fn(n, |i, _| {
        let minor = b.clone().remove_row(n - 1).remove_column(i);
        let sign = if (i + n - 1) % 2 == 0 { 1.0 } else { -1.0 };
        sign * minor.determinant()
    })
}

/// Diagonalises a real matrix: `m = C diag(μ) C⁻¹` with `|μ|` ascending,
/// unit columns whose first nonzero entry is positive real, and conjugate
/// eigenvalues paired with conjugate columns.
pub fn m_eigendecomposition(m: &DMatrix<f64>) -> Result<Eigen> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::Domain("matrix must be square and nonempty".into()));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let pairs = match n {
        1 => vec![(Complex64::new(m[(0, 0)], 0.0), vec![Complex64::new(1.0, 0.0)])],
        2 => eigen_2x2(m),
        _ => eigen_general(m, scale)?,
    };
    let mut pairs: Vec<(Complex64, Vec<Complex64>)> = pairs
        .into_iter()
        .map(|(mu, v)| (mu, normalise_column(v)))
        .collect();
    pairs.sort_by(|x, y| eigen_order(x.0, y.0));
    let mu: Vec<Complex64> = pairs.iter().map(|p| p.0).collect();
    for (i, v) in mu.iter().enumerate() {
        if v.norm() <= 1e-14 * scale.max(1.0) {
            return Err(Error::validation(
                Condition::D,
                format!("eigenvalue mu_{} of M vanishes", i + 1),
            ));
        }
    }
    let c = DMatrix::from_fn(n, n, |i, j| pairs[j].1[i]);
    let sv = c.clone().singular_values();
    let cond = sv.max() / sv.min();
    if !(cond <= DEFECTIVE_COND) {
        return Err(Error::validation(
            Condition::D,
            format!("M is not diagonalisable within tolerance (cond(C) = {cond:.3e})"),
        ));
    }
    let c_inv = c
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::validation(Condition::D, "eigenvector matrix is singular"))?;
    let recon = &c * DMatrix::from_diagonal(&DVector::from_vec(mu.clone())) * &c_inv;
    let resid = (recon - m.map(|v| Complex64::new(v, 0.0))).map(|v| v.norm()).max();
    if resid > RECONSTRUCTION_TOL * scale.max(1.0) {
        return Err(Error::numeric(format!(
            "eigendecomposition residual {resid:.3e} exceeds tolerance"
        )));
    }
    let conj_perm = (0..n)
        .map(|i| {
            if mu[i].im == 0.0 {
                i
            } else {
                (0..n)
                    .find(|&j| j != i && mu[j] == mu[i].conj())
                    .expect("conjugate eigenvalues are paired exactly")
            }
        })
        .collect();
    Ok(Eigen {
        mu,
        c,
        c_inv,
        conj_perm,
    })
}

fn eigen_order(a: Complex64, b: Complex64) -> Ordering {
    let (ma, mb) = (a.norm(), b.norm());
    if (ma - mb).abs() > 1e-12 * ma.max(mb) {
        return ma.total_cmp(&mb);
    }
    b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im))
}

fn normalise_column(mut v: Vec<Complex64>) -> Vec<Complex64> {
    let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    for x in v.iter_mut() {
        *x /= norm;
    }
    if let Some(first) = v.iter().find(|x| x.norm() > 1e-12).copied() {
        let phase = first.conj() / first.norm();
        for x in v.iter_mut() {
            *x *= phase;
        }
    }
    for x in v.iter_mut() {
        if x.im.abs() <= 1e-15 {
            x.im = 0.0;
        }
    }
    v
}

fn eigen_2x2(m: &DMatrix<f64>) -> Vec<(Complex64, Vec<Complex64>)> {
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let half_tr = 0.5 * (a + d);
    let half_diff = 0.5 * (a - d);
    let disc = half_diff * half_diff + b * c;
    let vector = |l: Complex64| -> Vec<Complex64> {
        let v1 = [Complex64::new(b, 0.0), l - a];
        let v2 = [l - d, Complex64::new(c, 0.0)];
        let n1 = v1[0].norm_sqr() + v1[1].norm_sqr();
        let n2 = v2[0].norm_sqr() + v2[1].norm_sqr();
        if n1 >= n2 {
            v1.to_vec()
        } else {
            v2.to_vec()
        }
    };
    if disc >= 0.0 {
        let r = disc.sqrt();
        // larger-magnitude root first, the other by Vieta to avoid cancellation
        let big = if half_tr >= 0.0 { half_tr + r } else { half_tr - r };
        let det = a * d - b * c;
        let small = if big != 0.0 { det / big } else { half_tr - r };
        let (l1, l2) = (Complex64::new(big, 0.0), Complex64::new(small, 0.0));
        let mut v1 = vector(l1);
        let mut v2 = vector(l2);
        let zero = |v: &[Complex64]| v.iter().all(|x| x.norm() == 0.0);
        if zero(&v1) || zero(&v2) {
            // scalar matrix
            v1 = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
            v2 = vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
        }
        vec![(l1, v1), (l2, v2)]
    } else {
        let l = Complex64::new(half_tr, (-disc).sqrt());
        let v = normalise_column(vector(l));
        let w = v.iter().map(|x| x.conj()).collect();
        vec![(l, v), (l.conj(), w)]
    }
}

fn eigen_general(m: &DMatrix<f64>, scale: f64) -> Result<Vec<(Complex64, Vec<Complex64>)>> {
    let n = m.nrows();
    let raw = m.clone().complex_eigenvalues();
    let mut vals: Vec<Complex64> = raw.iter().copied().collect();
    let tol = 1e-12 * scale.max(1.0);
    for v in vals.iter_mut() {
        if v.im.abs() <= tol {
            v.im = 0.0;
        }
    }
    // pair conjugates exactly
    let mut used = vec![false; n];
    let mut ordered = Vec::with_capacity(n);
    for i in 0..n {
        if used[i] {
            continue;
        }
        used[i] = true;
        if vals[i].im == 0.0 {
            ordered.push(vals[i]);
            continue;
        }
        let j = (0..n)
            .filter(|&j| !used[j])
            .min_by(|&x, &y| {
                (vals[x] - vals[i].conj())
                    .norm()
                    .total_cmp(&(vals[y] - vals[i].conj()).norm())
            })
            .ok_or_else(|| Error::numeric("unpaired complex eigenvalue"))?;
        used[j] = true;
        let l = 0.5 * (vals[i] + vals[j].conj());
        let l = if l.im > 0.0 { l } else { l.conj() };
        ordered.push(l);
        ordered.push(l.conj());
    }
    // clusters of (numerically) equal eigenvalues share a null space
    let mc = m.map(|v| Complex64::new(v, 0.0));
    let cluster_tol = 1e-9 * scale.max(1.0);
    let mut out: Vec<(Complex64, Vec<Complex64>)> = Vec::with_capacity(n);
    let mut done = vec![false; n];
    for i in 0..n {
        if done[i] {
            continue;
        }
        let l = ordered[i];
        if l.im < 0.0 {
            continue; // filled from its partner
        }
        let members: Vec<usize> = (0..n)
            .filter(|&j| !done[j] && (ordered[j] - l).norm() <= cluster_tol)
            .collect();
        let shifted = &mc - DMatrix::identity(n, n) * l;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.ok_or_else(|| Error::numeric("SVD failed"))?;
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&x, &y| svd.singular_values[x].total_cmp(&svd.singular_values[y]));
        for (k, &j) in members.iter().enumerate() {
            done[j] = true;
            let row = idx[k];
            let mut v: Vec<Complex64> = (0..n).map(|c| v_t[(row, c)].conj()).collect();
            if l.im == 0.0 {
                // real eigenvalue: rotate to a real vector
                let big = v
                    .iter()
                    .copied()
                    .max_by(|x, y| x.norm().total_cmp(&y.norm()))
                    .unwrap();
                let ph = big.conj() / big.norm();
                for x in v.iter_mut() {
                    *x = Complex64::new((*x * ph).re, 0.0);
                }
            }
            let v = normalise_column(v);
            if l.im > 0.0 {
                let partner = (0..n)
                    .find(|&p| !done[p] && ordered[p] == l.conj())
                    .ok_or_else(|| Error::numeric("missing conjugate partner"))?;
                done[partner] = true;
                out.push((l.conj(), v.iter().map(|x| x.conj()).collect()));
            }
            out.push((ordered[j], v));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Unverified,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionCheck {
    pub condition: String,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralSummary {
    pub perron: f64,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub mu: Vec<[f64; 2]>,
    pub nu: Vec<[f64; 2]>,
    pub mu_n_squared: f64,
    pub mu_1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub n: usize,
    pub rational: bool,
    pub checks: Vec<ConditionCheck>,
    pub spectral: Option<SpectralSummary>,
}

impl ConditionReport {
    pub fn status(&self, condition: &str) -> Option<CheckStatus> {
        self.checks
            .iter()
            .find(|c| c.condition == condition)
            .map(|c| c.status)
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.status == CheckStatus::Pass)
    }
}

/// Pass/fail report for the four hypotheses. Never fails; problems are
/// recorded in the report. `angle` is a critical-angle estimate, if known.
pub fn check_conditions(model: &PgfModel, angle: Option<f64>) -> ConditionReport {
    let mut checks = Vec::new();
    let check = |c: &str, status, detail: String| ConditionCheck {
        condition: c.to_string(),
        status,
        detail,
    };
    checks.push(check(
        "A",
        CheckStatus::Pass,
        format!(
            "valid PGF with P(0) = 0 and a nonlinear component; analyticity margin {} taken on trust",
            model.margin()
        ),
    ));
    let mean = model.mean_matrix();
    let mut spectral = None;
    match perron_data(&mean) {
        Err(e) => checks.push(check("B", CheckStatus::Fail, e.to_string())),
        Ok((e, _, _)) => {
            checks.push(check(
                "B",
                CheckStatus::Pass,
                format!("all mean entries positive, Perron root {e}"),
            ));
            checks.push(match angle {
                None => check(
                    "C",
                    CheckStatus::Unverified,
                    "estimate from julia module required".into(),
                ),
                Some(t) if t > FRAC_PI_2 => check(
                    "C",
                    CheckStatus::Pass,
                    format!("critical angle estimate {t} > pi/2"),
                ),
                Some(t) => check(
                    "C",
                    CheckStatus::Fail,
                    format!("critical angle estimate {t} <= pi/2"),
                ),
            });
        }
    }
    match SpectralData::compute(model) {
        Ok(sd) => {
            let lo = sd.mu[0].norm();
            let hi = sd.mu[sd.n() - 1].norm();
            let ok = sd.require_condition_d().is_ok();
            checks.push(check(
                "D",
                if ok { CheckStatus::Pass } else { CheckStatus::Fail },
                format!(
                    "|mu_N|^2 = {} {} |mu_1| = {lo}",
                    hi * hi,
                    if ok { "<" } else { ">=" }
                ),
            ));
            spectral = Some(SpectralSummary {
                perron: sd.perron,
                left: sd.left.iter().copied().collect(),
                right: sd.right.iter().copied().collect(),
                mu: sd.mu.iter().map(|v| [v.re, v.im]).collect(),
                nu: sd.nu.iter().map(|v| [v.re, v.im]).collect(),
                mu_n_squared: hi * hi,
                mu_1: lo,
            });
        }
        Err(e) => {
            if !checks.iter().any(|c| c.status == CheckStatus::Fail) {
                checks.push(check("D", CheckStatus::Fail, e.to_string()));
            } else {
                let m = model.linear_part_at_zero();
                match m_eigendecomposition(&m) {
                    Ok(eig) => {
                        let lo = eig.mu[0].norm();
                        let hi = eig.mu[eig.mu.len() - 1].norm();
                        let ok = hi * hi < lo;
                        checks.push(check(
                            "D",
                            if ok { CheckStatus::Pass } else { CheckStatus::Fail },
                            format!("|mu_N|^2 = {} vs |mu_1| = {lo}", hi * hi),
                        ));
                    }
                    Err(e) => checks.push(check("D", CheckStatus::Fail, e.to_string())),
                }
            }
        }
    }
    ConditionReport {
        n: model.n(),
        rational: model.is_rational(),
        checks,
        spectral,
    }
}
