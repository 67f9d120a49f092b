//! The left-tail expansion `d(x) = Σ_m x^{m·ν − 1}·V_m(log_E x)` and its
//! single-mode approximation.
//!
//! Every term is combined in the log domain:
//! `ln(r^|m|ψ_m) + ln κ_{m,n} − ln Γ(s) − |m|·ln r + (s − 1)·ln x` with
//! `s = −(ln μ^m + 2πin)/ln E`, so neither `ψ_m` nor `1/Γ(s)` is ever
//! formed on its own.

use crate::error::{Error, Result};
use crate::fourier::{fourier_coefficients, FourierConfig, FourierTable, KEvaluator};
use crate::gamma::ln_gamma;
use crate::model::PgfModel;
use crate::multi_index::MultiIndex;
use crate::numeric::CompensatedSum;
use crate::schroder::{psi_coefficients, TaylorTable, DEFAULT_PHI_ITERATIONS};
use crate::spectral::SpectralData;
use num_complex::Complex64;
use std::f64::consts::PI;

/// Largest tolerated imaginary part of an accumulated density.
pub const IMAG_RESIDUE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesConfig {
    pub m_cap: u32,
    pub n_max: usize,
    pub fft_size: usize,
    /// Fixed Taylor scale; `None` picks one automatically.
    pub scale: Option<f64>,
    pub contour_angle: Option<f64>,
    /// Iterations of both the Π and the Φ recurrences inside `K`.
    pub iterations: usize,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        let f = FourierConfig::default();
        SeriesConfig {
            m_cap: f.degree_cap,
            n_max: f.n_max,
            fft_size: f.fft_size,
            scale: None,
            contour_angle: None,
            iterations: DEFAULT_PHI_ITERATIONS,
        }
    }
}

/// One term `exp(log_coef + (s − 1)·ln x)` of component `i`.
#[derive(Debug, Clone, Copy)]
struct Term {
    component: usize,
    degree: u32,
    mode: i64,
    log_coef: Complex64,
    s: Complex64,
}

/// A density value with the size of the imaginary part that was dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesValue {
    pub density: Vec<f64>,
    pub imag_residue: f64,
}

#[derive(Debug, Clone)]
pub struct SeriesEvaluator {
    n: usize,
    ln_e: f64,
    m_cap: u32,
    n_max: usize,
    taylor: TaylorTable,
    fourier: FourierTable,
    /// `ln K(1)` per component, `None` where `K_j(1) = 0`.
    ln_k1: Vec<Option<Complex64>>,
    k1: Vec<Complex64>,
    terms: Vec<Term>,
}

impl SeriesEvaluator {
    pub fn new(model: &PgfModel, spectral: &SpectralData, config: &SeriesConfig) -> Result<Self> {
        let kev = KEvaluator::new(model, spectral, config.iterations, config.iterations)?;
        let taylor = psi_coefficients(model, spectral, config.m_cap, config.scale)?;
        let fourier = fourier_coefficients(
            model,
            spectral,
            &kev,
            &FourierConfig {
                degree_cap: config.m_cap,
                n_max: config.n_max,
                fft_size: config.fft_size,
                contour_angle: config.contour_angle,
                check_aliasing: true,
            },
        )?;
        let k1 = kev.k_eval(Complex64::new(1.0, 0.0))?;
        Self::from_tables(spectral, taylor, fourier, k1)
    }

    /// Assembles the evaluator from precomputed tables; `k1` is `K(1)`.
    pub fn from_tables(
        spectral: &SpectralData,
        taylor: TaylorTable,
        fourier: FourierTable,
        k1: Vec<Complex64>,
    ) -> Result<Self> {
        let n = spectral.n();
        if taylor.n() != n || k1.len() != n {
            return Err(Error::Domain("tables disagree on the number of types".into()));
        }
        let m_cap = taylor.degree_cap();
        if fourier.indices().iter().any(|m| m.degree() > m_cap) {
            return Err(Error::Domain(format!(
                "Fourier table exceeds the Taylor degree cap {m_cap}"
            )));
        }
        let ln_e = spectral.ln_perron();
        let ln_r = taylor.scale().ln();
        let nm = fourier.n_max() as i64;
        let mut terms = Vec::new();
        for (k, m) in fourier.indices().iter().enumerate() {
            let psi = taylor.scaled(m);
            let lm = fourier.ln_mu_power(k);
            for mode in -nm..=nm {
                let kappa = fourier.kappa(k, mode);
                if kappa == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let s = -(lm + Complex64::new(0.0, 2.0 * PI * mode as f64)) / ln_e;
                let lg = ln_gamma(s);
                if lg.re.is_infinite() {
                    continue;
                }
                for (i, p) in psi.iter().enumerate() {
                    if *p == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    terms.push(Term {
                        component: i,
                        degree: m.degree(),
                        mode,
                        log_coef: p.ln() + kappa.ln() - lg - m.degree() as f64 * ln_r,
                        s,
                    });
                }
            }
        }
        let ln_k1 = k1
            .iter()
            .map(|v| (v.norm() > 0.0).then(|| v.ln()))
            .collect();
        Ok(SeriesEvaluator {
            n,
            ln_e,
            m_cap,
            n_max: fourier.n_max(),
            taylor,
            fourier,
            ln_k1,
            k1,
            terms,
        })
    }

    /// The same tables with smaller truncation limits.
    pub fn truncated(&self, m_cap: u32, n_max: usize) -> Result<Self> {
        if m_cap > self.taylor.degree_cap() || n_max > self.fourier.n_max() {
            return Err(Error::Domain(format!(
                "truncation ({m_cap}, {n_max}) exceeds the tables ({}, {})",
                self.taylor.degree_cap(),
                self.fourier.n_max()
            )));
        }
        let mut out = self.clone();
        out.m_cap = m_cap;
        out.n_max = n_max;
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m_cap(&self) -> u32 {
        self.m_cap
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn taylor(&self) -> &TaylorTable {
        &self.taylor
    }

    pub fn fourier(&self) -> &FourierTable {
        &self.fourier
    }

    pub fn k_at_one(&self) -> &[Complex64] {
        &self.k1
    }

    fn active(&self) -> impl Iterator<Item = &Term> {
        let (cap, nm) = (self.m_cap, self.n_max as i64);
        self.terms
            .iter()
            .filter(move |t| t.degree <= cap && t.mode.abs() <= nm)
    }

    fn position(&self, m: &MultiIndex) -> Result<usize> {
        if m.len() != self.n || m.degree() == 0 || m.degree() > self.m_cap {
            return Err(Error::Domain(format!("multi-index {m} outside the series caps")));
        }
        self.fourier
            .position(m)
            .ok_or_else(|| Error::Domain(format!("multi-index {m} not in the table")))
    }

    /// `V_m(u) = ψ_m·Σ_{|n| ≤ n_max} κ_{m,n} e^{−2πinu} / Γ(s_n)`.
    pub fn v_function(&self, m: &MultiIndex, u: f64) -> Result<Vec<Complex64>> {
        let k = self.position(m)?;
        let psi = self.taylor.scaled(m);
        let ln_r = self.taylor.scale().ln();
        let lm = self.fourier.ln_mu_power(k);
        let nm = self.n_max as i64;
        let mut out = vec![CompensatedSum::default(); self.n];
        for mode in -nm..=nm {
            let kappa = self.fourier.kappa(k, mode);
            let s = -(lm + Complex64::new(0.0, 2.0 * PI * mode as f64)) / self.ln_e;
            let lg = ln_gamma(s);
            if lg.re.is_infinite() || kappa == Complex64::new(0.0, 0.0) {
                continue;
            }
            let phase = Complex64::new(0.0, -2.0 * PI * mode as f64 * u);
            for (acc, p) in out.iter_mut().zip(&psi) {
                if *p != Complex64::new(0.0, 0.0) {
                    acc.add((p.ln() + kappa.ln() - lg - m.degree() as f64 * ln_r + phase).exp());
                }
            }
        }
        Ok(out.iter().map(|a| a.value()).collect())
    }

    /// Full series at `x`, with the imaginary residue reported.
    pub fn density_series_detailed(&self, x: f64) -> Result<SeriesValue> {
        check_x(x)?;
        let lx = x.ln();
        let mut acc = vec![CompensatedSum::default(); self.n];
        for t in self.active() {
            acc[t.component].add((t.log_coef + (t.s - 1.0) * lx).exp());
        }
        finish(acc, x)
    }

    pub fn density_series(&self, x: f64) -> Result<Vec<f64>> {
        self.density_series_detailed(x).map(|v| v.density)
    }

    /// `∫₀^x t^k·d(t) dt`, integrating the series term by term.
    pub fn partial_moment(&self, x: f64, k: u32) -> Result<Vec<f64>> {
        check_x(x)?;
        let lx = x.ln();
        let mut acc = vec![CompensatedSum::default(); self.n];
        for t in self.active() {
            let e = t.s + k as f64;
            acc[t.component].add((t.log_coef + e * lx - e.ln()).exp());
        }
        finish(acc, x).map(|v| v.density)
    }

    /// `Σ_m ψ_m·K(1)^m·x^{m·ν − 1}/Γ(m·ν)`.
    pub fn density_approx(&self, x: f64) -> Result<Vec<f64>> {
        check_x(x)?;
        let lx = x.ln();
        let ln_r = self.taylor.scale().ln();
        let mut acc = vec![CompensatedSum::default(); self.n];
        for (k, m) in self.fourier.indices().iter().enumerate() {
            if m.degree() > self.m_cap {
                continue;
            }
            let s = -self.fourier.ln_mu_power(k) / self.ln_e;
            let lg = ln_gamma(s);
            if lg.re.is_infinite() {
                continue;
            }
            let (log_k, direct) = self.k1_power(m);
            for (i, p) in self.taylor.scaled(m).iter().enumerate() {
                if *p == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let base = p.ln() - lg - m.degree() as f64 * ln_r + (s - 1.0) * lx;
                let term = match log_k {
                    Some(l) => (base + l).exp(),
                    None => base.exp() * direct,
                };
                acc[i].add(term);
            }
        }
        finish(acc, x).map(|v| v.density)
    }

    /// `m·ln K(1)` when every needed component is nonzero, else the
    /// product `K(1)^m` itself.
    fn k1_power(&self, m: &MultiIndex) -> (Option<Complex64>, Complex64) {
        let mut log = Complex64::new(0.0, 0.0);
        for (j, &e) in m.entries().iter().enumerate() {
            if e == 0 {
                continue;
            }
            match self.ln_k1[j] {
                Some(l) => log += l * e as f64,
                None => return (None, m.monomial(&self.k1)),
            }
        }
        (Some(log), Complex64::new(0.0, 0.0))
    }
}

fn check_x(x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("density needs x > 0, got {x}")))
    }
}

fn finish(acc: Vec<CompensatedSum>, x: f64) -> Result<SeriesValue> {
    let vals: Vec<Complex64> = acc.iter().map(|a| a.value()).collect();
    let residue = vals.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    if !(residue <= IMAG_RESIDUE_TOL) || vals.iter().any(|v| !v.re.is_finite()) {
        return Err(Error::numeric(format!(
            "series at x = {x} left an imaginary part of {residue:.3e}"
        )));
    }
    Ok(SeriesValue {
        density: vals.iter().map(|v| v.re).collect(),
        imag_residue: residue,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::fourier::order_multiindices;

    fn build(p: f64, q: f64, cap: u32, scale: Option<f64>) -> (SpectralData, SeriesEvaluator) {
        let m = catalog::two_type_quadratic(p, q).unwrap();
        let sd = SpectralData::compute(&m).unwrap();
        let cfg = SeriesConfig {
            m_cap: cap,
            scale,
            ..Default::default()
        };
        let ev = SeriesEvaluator::new(&m, &sd, &cfg).unwrap();
        (sd, ev)
    }

    #[test]
    fn v_function_periodic_and_mean() {
        let (sd, ev) = build(1.0 / 3.0, 0.5, 3, None);
        for m in order_multiindices(&sd.mu, 3) {
            let a = ev.v_function(&m, 0.0).unwrap();
            let b = ev.v_function(&m, 1.0 - 1e-16).unwrap();
            let half = ev.truncated(3, 8).unwrap();
            let mut mean = vec![Complex64::new(0.0, 0.0); 2];
            let j = 64;
            for s in 0..j {
                let v = ev.v_function(&m, s as f64 / j as f64).unwrap();
                let h = half.v_function(&m, s as f64 / j as f64).unwrap();
                for i in 0..2 {
                    mean[i] += v[i] / j as f64;
                    assert!((v[i] - h[i]).norm() <= 1e-8);
                }
            }
            let k = ev.fourier().position(&m).unwrap();
            let s0 = -ev.fourier().ln_mu_power(k) / sd.ln_perron();
            let psi = ev.taylor().coefficient(&m);
            for i in 0..2 {
                assert!((a[i] - b[i]).norm() <= 1e-12);
                let want = ev.fourier().kappa(k, 0) * psi[i] * (-ln_gamma(s0)).exp();
                assert!((mean[i] - want).norm() <= 1e-12 * (1.0 + want.norm()));
            }
        }
        assert!(ev.v_function(&MultiIndex::new(vec![4, 0]), 0.0).is_err());
    }

    #[test]
    fn scale_cancels_exactly() {
        let (_, a) = build(1.0 / 3.0, 0.5, 12, Some(0.5));
        let (_, b) = build(1.0 / 3.0, 0.5, 12, Some(0.25));
        for x in [0.3, 1.0, 2.5] {
            let da = a.density_approx(x).unwrap();
            let db = b.density_approx(x).unwrap();
            let sa = a.density_series(x).unwrap();
            let sb = b.density_series(x).unwrap();
            for i in 0..2 {
                assert!((da[i] - db[i]).abs() <= 1e-10 * da[i].abs().max(1.0));
                assert!((sa[i] - sb[i]).abs() <= 1e-10 * sa[i].abs().max(1.0));
            }
        }
    }

    #[test]
    fn density_is_real_and_nonnegative() {
        // beyond x ≈ 4 the degree-40 truncation no longer converges
        let (_, ev) = build(1.0 / 3.0, 0.5, 40, None);
        for k in 0..=30 {
            let x = 0.05 + k as f64 * 0.1;
            let v = ev.density_series_detailed(x).unwrap();
            assert!(v.imag_residue <= 1e-8, "x={x}: {}", v.imag_residue);
            assert!(v.density.iter().all(|d| *d >= -1e-6), "x={x}: {:?}", v.density);
        }
        assert!(ev.density_series(0.0).is_err());
        assert!(ev.density_approx(-1.0).is_err());
    }

    #[test]
    fn small_x_slope_matches_leading_exponent() {
        let (sd, ev) = build(1.0 / 3.0, 0.5, 20, None);
        let order = order_multiindices(&sd.mu, 20);
        let (x0, x1) = (1e-3, 1e-2);
        let d0 = ev.density_series(x0).unwrap();
        let d1 = ev.density_series(x1).unwrap();
        for i in 0..2 {
            let lead = order
                .iter()
                .find(|m| ev.taylor().scaled(m)[i].norm() > 0.0)
                .unwrap();
            let want = -1.0 + (lead.dot(&sd.nu)).re;
            let slope = (d1[i].ln() - d0[i].ln()) / (x1 / x0).ln();
            assert!((slope - want).abs() <= 0.05, "i={i}: {slope} vs {want}");
        }
    }

    #[test]
    fn partial_moment_matches_trapezoid() {
        let (_, ev) = build(2.0 / 3.0, 0.5, 30, None);
        let x0 = 0.05;
        let n = 20_000;
        // t = x0·u^4 tames the x^{ν-1} endpoint
        let mut acc = [0.0; 2];
        for j in 1..=n {
            let u = j as f64 / n as f64;
            let t = x0 * u.powi(4);
            let jac = 4.0 * x0 * u.powi(3);
            let w = if j == n { 0.5 } else { 1.0 };
            let d = ev.density_series(t).unwrap();
            for i in 0..2 {
                acc[i] += w * d[i] * jac / n as f64;
            }
        }
        let got = ev.partial_moment(x0, 0).unwrap();
        for i in 0..2 {
            assert!((got[i] - acc[i]).abs() <= 1e-8, "{} vs {}", got[i], acc[i]);
        }
    }

    #[test]
    fn truncation_monotone_in_caps() {
        let (_, ev) = build(1.0 / 3.0, 0.5, 30, None);
        let d = |c: u32| ev.truncated(c, 16).unwrap().density_series(1.0).unwrap()[0];
        let (a, b, c) = (d(5), d(10), d(20));
        assert!((c - b).abs() < (b - a).abs());
        assert!(ev.truncated(31, 16).is_err());
    }

    #[test]
    fn approx_tracks_series_on_single_type() {
        let m = catalog::binary_splitting(0.5).unwrap();
        let sd = SpectralData::compute(&m).unwrap();
        let ev = SeriesEvaluator::new(
            &m,
            &sd,
            &SeriesConfig {
                m_cap: 30,
                ..Default::default()
            },
        )
        .unwrap();
        for x in [0.5, 1.0, 2.0] {
            let s = ev.density_series(x).unwrap()[0];
            let a = ev.density_approx(x).unwrap()[0];
            assert!(s > 0.0 && ((a - s) / s).abs() < 0.05, "x={x}: {a} vs {s}");
        }
    }
}
