//! `K(z) = C⁻¹·Φ(Π(z))`, which is quasi-periodic (`K_i(Ez) = μ_i·K_i(z)`),
//! and the Fourier coefficients `κ_{m,n}` of the periodic functions
//! `w ↦ e^{−w·ln μ^m}·K^m(E^w)`.
//!
//! The zero mode is sampled on the real segment `[1, E]`. Modes `n > 0`
//! (`n < 0`) are sampled on the segment rotated by `−θ_c` (`+θ_c`), where
//! they are damped by `e^{−2π|n|θ_c/ln E}`; on the real segment they would
//! sit at the rounding floor.

use crate::error::{Error, Result};
use crate::julia;
use crate::model::PgfModel;
use crate::multi_index::MultiIndex;
use crate::poincare::{PoincareEvaluator, SECTOR_GUARD};
use crate::schroder::SchroderEvaluator;
use crate::spectral::SpectralData;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use std::cmp::Ordering;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

pub const DEFAULT_N_MAX: usize = 16;
pub const DEFAULT_FFT_SIZE: usize = 256;
/// Tolerance of the J-doubling check, relative to the largest coefficient
/// of the same multi-index.
pub const ALIASING_TOL: f64 = 1e-10;
/// `K` is evaluated only for `|z|` at least this large.
pub const K_MIN_MODULUS: f64 = 1.0;

/// Evaluates `K = C⁻¹·Φ∘Π`.
#[derive(Debug, Clone)]
pub struct KEvaluator {
    poincare: PoincareEvaluator,
    schroder: SchroderEvaluator,
}

impl KEvaluator {
    pub fn new(
        model: &PgfModel,
        spectral: &SpectralData,
        pi_iterations: usize,
        phi_iterations: usize,
    ) -> Result<Self> {
        Ok(KEvaluator {
            poincare: PoincareEvaluator::new(model, pi_iterations)?,
            schroder: SchroderEvaluator::new(model, spectral, phi_iterations)?,
        })
    }

    /// Permits arguments left of the imaginary axis inside the sector.
    pub fn with_sector_angle(mut self, angle: f64) -> Self {
        self.poincare = self.poincare.with_sector_angle(angle);
        self
    }

    pub fn poincare(&self) -> &PoincareEvaluator {
        &self.poincare
    }

    pub fn k_eval(&self, z: Complex64) -> Result<Vec<Complex64>> {
        if !(z.norm() >= K_MIN_MODULUS) {
            return Err(Error::Domain(format!(
                "K is evaluated for |z| >= {K_MIN_MODULUS}, got {z}"
            )));
        }
        let pi = self.poincare.pi_eval(z)?;
        self.schroder.phi_eigen(&pi)
    }
}

/// Every `m` with `1 ≤ |m| ≤ cap`, by descending `|μ^m|`; ties in modulus
/// are broken by ascending lexicographic order.
pub fn order_multiindices(mu: &[Complex64], cap: u32) -> Vec<MultiIndex> {
    let ln_abs: Vec<f64> = mu.iter().map(|m| m.norm().ln()).collect();
    let key = |m: &MultiIndex| -> f64 {
        m.entries()
            .iter()
            .zip(&ln_abs)
            .map(|(&k, l)| k as f64 * l)
            .sum()
    };
    let mut all: Vec<(f64, MultiIndex)> = MultiIndex::up_to_degree(mu.len(), cap)
        .into_iter()
        .map(|m| (key(&m), m))
        .collect();
    all.sort_by(|a, b| {
        let scale = a.0.abs().max(b.0.abs()).max(1.0);
        if (a.0 - b.0).abs() > 1e-12 * scale {
            b.0.total_cmp(&a.0)
        } else {
            a.1.cmp(&b.1)
        }
    });
    all.into_iter().map(|p| p.1).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierConfig {
    pub degree_cap: u32,
    pub n_max: usize,
    pub fft_size: usize,
    /// Rotation of the contours carrying the nonzero modes. `None` derives
    /// it from a critical-angle estimate as the midpoint of `(π/2, θ*)`.
    pub contour_angle: Option<f64>,
    pub check_aliasing: bool,
}

impl Default for FourierConfig {
    fn default() -> Self {
        FourierConfig {
            degree_cap: crate::schroder::DEFAULT_DEGREE_CAP,
            n_max: DEFAULT_N_MAX,
            fft_size: DEFAULT_FFT_SIZE,
            contour_angle: None,
            check_aliasing: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FourierTable {
    indices: Vec<MultiIndex>,
    /// `ln μ^m` as a sum of principal logarithms.
    ln_mu_m: Vec<Complex64>,
    n_max: usize,
    fft_size: usize,
    contour_angle: f64,
    /// `kappa[k][n + n_max]`.
    kappa: Vec<Vec<Complex64>>,
    aliasing_error: Option<f64>,
}

impl FourierTable {
    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn contour_angle(&self) -> f64 {
        self.contour_angle
    }

    pub fn ln_mu_power(&self, k: usize) -> Complex64 {
        self.ln_mu_m[k]
    }

    /// `κ_{m,n}` for the `k`-th ordered multi-index.
    pub fn kappa(&self, k: usize, n: i64) -> Complex64 {
        assert!(n.unsigned_abs() as usize <= self.n_max, "mode {n} outside table");
        self.kappa[k][(n + self.n_max as i64) as usize]
    }

    pub fn row(&self, k: usize) -> &[Complex64] {
        &self.kappa[k]
    }

    pub fn position(&self, m: &MultiIndex) -> Option<usize> {
        self.indices.iter().position(|x| x == m)
    }

    /// Largest change of any coefficient when the sample count is halved,
    /// relative to the largest coefficient of its multi-index.
    pub fn aliasing_error(&self) -> Option<f64> {
        self.aliasing_error
    }

    /// `Σ_n κ_{m,n} e^{2πinw}·e^{w·ln μ^m}`: the synthesised `K^m(E^w)`.
    pub fn synthesize(&self, k: usize, w: Complex64) -> Complex64 {
        let n = self.n_max as i64;
        let s: Complex64 = (-n..=n)
            .map(|j| self.kappa(k, j) * (Complex64::new(0.0, 2.0 * PI * j as f64) * w).exp())
            .sum();
        s * (w * self.ln_mu_m[k]).exp()
    }

    /// CSV dump: `m,n,re,im`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,n,re,im\n");
        let n = self.n_max as i64;
        for (k, m) in self.indices.iter().enumerate() {
            let key = m
                .entries()
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(" ");
            for j in -n..=n {
                let v = self.kappa(k, j);
                let _ = writeln!(out, "{key},{j},{:.17e},{:.17e}", v.re, v.im);
            }
        }
        out
    }
}

/// Resolves the contour rotation and the sector in which `Π` may be used.
pub fn contour_geometry(
    model: &PgfModel,
    spectral: &SpectralData,
    config: &FourierConfig,
) -> Result<(f64, f64)> {
    if let Some(a) = config.contour_angle {
        if !(a.is_finite() && a.abs() < PI) {
            return Err(Error::Domain(format!("contour angle {a} out of range")));
        }
        return Ok((a.abs(), a.abs() + 2.0 * SECTOR_GUARD));
    }
    let b: Vec<f64> = spectral.right.iter().copied().collect();
    let theta = julia::default_critical_angle(model, &b)?.angle;
    let mid = 0.5 * (FRAC_PI_2 + theta);
    if theta - mid > SECTOR_GUARD {
        Ok((mid, theta))
    } else {
        Ok((FRAC_PI_2, theta.max(FRAC_PI_2 + SECTOR_GUARD)))
    }
}

/// Samples `K` at `z_j = E^{j/J}·e^{i·angle}`, `j < J`.
pub fn sample_k(kev: &KEvaluator, angle: f64, samples: usize) -> Result<Vec<Vec<Complex64>>> {
    let e = kev.poincare().perron();
    let rot = Complex64::from_polar(1.0, angle);
    (0..samples)
        .into_par_iter()
        .map(|j| {
            let z = rot * e.powf(j as f64 / samples as f64);
            kev.k_eval(z).map_err(|err| Error::AtIndex {
                index: j,
                source: Box::new(err),
            })
        })
        .collect()
}

/// All modes `|n| ≤ n_max` of every listed multi-index from samples on the
/// single contour of the given rotation. Returns `κ = e^{2πny}·F_n` with
/// `y = angle/ln E`.
pub fn coefficients_on_contour(
    samples: &[Vec<Complex64>],
    ln_mu_m: &[Complex64],
    indices: &[MultiIndex],
    angle: f64,
    ln_e: f64,
    n_max: usize,
) -> Vec<Vec<Complex64>> {
    let j_len = samples.len();
    let n = samples[0].len();
    let cap = indices.iter().map(|m| m.degree()).max().unwrap_or(0) as usize;
    // powers[i][k][j] = K_i(z_j)^k
    let powers: Vec<Vec<Vec<Complex64>>> = (0..n)
        .map(|i| {
            let mut table = vec![vec![Complex64::new(1.0, 0.0); j_len]];
            for k in 1..=cap {
                let prev = &table[k - 1];
                let next: Vec<Complex64> = prev.iter().zip(samples).map(|(p, s)| p * s[i]).collect();
                table.push(next);
            }
            table
        })
        .collect();
    let y = angle / ln_e;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(j_len);
    indices
        .par_iter()
        .zip(ln_mu_m.par_iter())
        .map(|(m, &lm)| {
            let mut buf: Vec<Complex64> = (0..j_len)
                .map(|j| {
                    let w = Complex64::new(j as f64 / j_len as f64, y);
                    let mut v = (-w * lm).exp();
                    for (i, &k) in m.entries().iter().enumerate() {
                        if k > 0 {
                            v *= powers[i][k as usize][j];
                        }
                    }
                    v
                })
                .collect();
            fft.process(&mut buf);
            let nm = n_max as i64;
            (-nm..=nm)
                .map(|n| {
                    let f = buf[n.rem_euclid(j_len as i64) as usize] / j_len as f64;
                    f * (2.0 * PI * n as f64 * y).exp()
                })
                .collect()
        })
        .collect()
}

/// Builds the coefficient table for all multi-indices up to the degree cap.
pub fn fourier_coefficients(
    model: &PgfModel,
    spectral: &SpectralData,
    kev: &KEvaluator,
    config: &FourierConfig,
) -> Result<FourierTable> {
    model.ensure_polynomial("Fourier coefficients of the quasi-periodic function")?;
    let j = config.fft_size;
    if !j.is_power_of_two() || j < 4 * config.n_max.max(1) {
        return Err(Error::Domain(format!(
            "FFT size {j} must be a power of two and at least 4·n_max"
        )));
    }
    if config.degree_cap == 0 {
        return Err(Error::Domain("degree cap must be at least 1".into()));
    }
    let (angle, sector) = contour_geometry(model, spectral, config)?;
    let kev = kev.clone().with_sector_angle(sector);
    let indices = order_multiindices(&spectral.mu, config.degree_cap);
    let ln_mu_m: Vec<Complex64> = indices
        .iter()
        .map(|m| spectral.ln_mu_power(m.entries()))
        .collect();
    let ln_e = spectral.ln_perron();
    let samples_per = if config.check_aliasing { 2 * j } else { j };
    let contours = [0.0, -angle, angle];
    let mut full = Vec::with_capacity(3);
    let mut halved = Vec::with_capacity(3);
    for &a in &contours {
        let s = sample_k(&kev, a, samples_per)?;
        if config.check_aliasing {
            let even: Vec<Vec<Complex64>> = s.iter().step_by(2).cloned().collect();
            halved.push(coefficients_on_contour(&even, &ln_mu_m, &indices, a, ln_e, config.n_max));
        }
        full.push(coefficients_on_contour(&s, &ln_mu_m, &indices, a, ln_e, config.n_max));
    }
    let nm = config.n_max;
    let assemble = |parts: &[Vec<Vec<Complex64>>]| -> Vec<Vec<Complex64>> {
        (0..indices.len())
            .map(|k| {
                (0..=2 * nm)
                    .map(|pos| match pos.cmp(&nm) {
                        Ordering::Equal => parts[0][k][pos],
                        Ordering::Greater => parts[1][k][pos],
                        Ordering::Less => parts[2][k][pos],
                    })
                    .collect()
            })
            .collect()
    };
    let kappa = assemble(&full);
    let aliasing_error = if config.check_aliasing {
        let coarse = assemble(&halved);
        let err = kappa
            .iter()
            .zip(&coarse)
            .map(|(a, b)| {
                let scale = a.iter().map(|v| v.norm()).fold(0.0, f64::max);
                if scale == 0.0 {
                    return 0.0;
                }
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (x - y).norm())
                    .fold(0.0, f64::max)
                    / scale
            })
            .fold(0.0, f64::max);
        if !(err <= ALIASING_TOL) {
            return Err(Error::numeric(format!(
                "aliasing check failed: halving {} samples changes coefficients by {err:.3e}",
                2 * j
            )));
        }
        Some(err)
    } else {
        None
    };
    // the table reports the sample count actually used
    Ok(FourierTable {
        indices,
        ln_mu_m,
        n_max: nm,
        fft_size: samples_per,
        contour_angle: angle,
        kappa,
        aliasing_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::poincare::DEFAULT_ITERATIONS;
    use crate::schroder::DEFAULT_PHI_ITERATIONS;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn setup(p: f64, q: f64) -> (PgfModel, SpectralData, KEvaluator) {
        let m = catalog::two_type_quadratic(p, q).unwrap();
        let sd = SpectralData::compute(&m).unwrap();
        let k = KEvaluator::new(&m, &sd, DEFAULT_ITERATIONS, DEFAULT_PHI_ITERATIONS).unwrap();
        (m, sd, k)
    }

    fn small_config(cap: u32) -> FourierConfig {
        FourierConfig {
            degree_cap: cap,
            ..Default::default()
        }
    }

    #[test]
    fn quasi_periodicity() {
        let (_, sd, kev) = setup(1.0 / 3.0, 0.5);
        let e = sd.perron;
        let mut pts = vec![c(1.0, 0.0), c(2.0, 0.0), c(1.0, 1.0)];
        for k in 0..17 {
            pts.push(Complex64::from_polar(1.0 + 0.3 * k as f64, -1.4 + 0.17 * k as f64));
        }
        for z in pts {
            let a = kev.k_eval(z * e).unwrap();
            let b = kev.k_eval(z).unwrap();
            for i in 0..2 {
                assert!((a[i] - sd.mu[i] * b[i]).norm() <= 1e-9, "z={z}");
            }
        }
    }

    #[test]
    fn geometric_k_is_reciprocal() {
        let m = catalog::geometric(0.5).unwrap();
        let sd = SpectralData::compute(&m).unwrap();
        let kev = KEvaluator::new(&m, &sd, DEFAULT_ITERATIONS, DEFAULT_PHI_ITERATIONS).unwrap();
        for z in [c(1.0, 0.0), c(1.5, 0.7), c(3.0, -2.0)] {
            let k = kev.k_eval(z).unwrap()[0];
            assert!((k - 1.0 / z).norm() < 1e-10);
            let ke = kev.k_eval(z * 2.0).unwrap()[0];
            assert!((ke / k - 0.5).norm() < 1e-9);
        }
        assert!(kev.k_eval(c(0.5, 0.0)).is_err());
    }

    #[test]
    fn far_right_decay_trend() {
        let (_, sd, kev) = setup(1.0 / 3.0, 0.5);
        let k1 = kev.k_eval(c(1.0, 0.0)).unwrap();
        let k50 = kev.k_eval(c(50.0, 0.0)).unwrap();
        let lifts = (50f64.ln() / sd.ln_perron()).floor() as i32;
        let bound = k1.iter().map(|v| v.norm()).fold(0.0, f64::max)
            * sd.mu.iter().map(|v| v.norm()).fold(0.0, f64::max).powi(lifts);
        assert!(k50.iter().all(|v| v.norm() <= bound * 1.5));
    }

    #[test]
    fn ordering_examples() {
        let mu = [c(1.0 / 3.0, 0.0), c(0.5, 0.0)];
        let got = order_multiindices(&mu, 2);
        let want: Vec<MultiIndex> = [[0, 1], [1, 0], [0, 2], [1, 1], [2, 0]]
            .iter()
            .map(|v| MultiIndex::new(v.to_vec()))
            .collect();
        assert_eq!(got, want);
        let got = order_multiindices(&[c(0.5, 0.0)], 3);
        let e: Vec<Vec<u32>> = got.iter().map(|m| m.entries().to_vec()).collect();
        assert_eq!(e, vec![vec![1], vec![2], vec![3]]);
        let got = order_multiindices(&[c(0.4, 0.0), c(0.4, 0.0)], 1);
        assert_eq!(got[0].entries(), &[0, 1]);
        assert_eq!(got[1].entries(), &[1, 0]);
    }

    #[test]
    fn geometric_table_is_a_single_mode() {
        // K(z) = 1/z, so exp(-w ln(1/2)) K(2^w) = 1
        let m = catalog::geometric(0.5).unwrap();
        let sd = SpectralData::compute(&m).unwrap();
        let kev = KEvaluator::new(&m, &sd, DEFAULT_ITERATIONS, DEFAULT_PHI_ITERATIONS).unwrap();
        let idx = order_multiindices(&sd.mu, 3);
        let lm: Vec<Complex64> = idx.iter().map(|m| sd.ln_mu_power(m.entries())).collect();
        let s = sample_k(&kev, 0.0, 64).unwrap();
        let k = coefficients_on_contour(&s, &lm, &idx, 0.0, sd.ln_perron(), 8);
        for row in &k {
            for (pos, v) in row.iter().enumerate() {
                let want = if pos == 8 { 1.0 } else { 0.0 };
                assert!((v - want).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn table_properties() {
        let (m, sd, kev) = setup(1.0 / 3.0, 0.5);
        let t = fourier_coefficients(&m, &sd, &kev, &small_config(3)).unwrap();
        assert!(t.aliasing_error().unwrap() <= ALIASING_TOL);
        assert!(t.contour_angle() > FRAC_PI_2);
        let e = sd.perron;
        let j = 64;
        for k in 0..t.indices().len() {
            let mm = &t.indices()[k];
            // zero mode is the trapezoid mean over one period on the real segment
            let mut mean = c(0.0, 0.0);
            for s in 0..j {
                let x = s as f64 / j as f64;
                let kv = kev.k_eval(c(e.powf(x), 0.0)).unwrap();
                let mut v = (-x * t.ln_mu_power(k)).exp();
                for (i, &p) in mm.entries().iter().enumerate() {
                    v *= kv[i].powu(p);
                }
                mean += v / j as f64;
            }
            assert!((mean - t.kappa(k, 0)).norm() < 1e-10 * (1.0 + mean.norm()));
            // real model: conjugate symmetry in n
            for n in 1..=t.n_max() as i64 {
                let a = t.kappa(k, n);
                let b = t.kappa(k, -n).conj();
                assert!((a - b).norm() <= 1e-12 * t.kappa(k, 0).norm().max(1.0));
            }
            // decay in |n|
            for n in 1..t.n_max() as i64 {
                assert!(t.kappa(k, n + 1).norm() < t.kappa(k, n).norm());
            }
        }
        // synthesised K^m is real on the positive axis and matches K there
        for x in [0.0, 0.3, 0.77] {
            let kv = kev.k_eval(c(e.powf(x), 0.0)).unwrap();
            for i in 0..2 {
                let k = t.position(&MultiIndex::unit(2, i)).unwrap();
                let s = t.synthesize(k, c(x, 0.0));
                assert!(s.im.abs() <= 1e-9);
                assert!((s - kv[i]).norm() <= 1e-9);
            }
        }
    }

    #[test]
    fn parseval_on_the_real_segment() {
        let (m, sd, kev) = setup(1.0 / 3.0, 0.5);
        let t = fourier_coefficients(&m, &sd, &kev, &small_config(1)).unwrap();
        let j = 256;
        let s = sample_k(&kev, 0.0, j).unwrap();
        for k in 0..t.indices().len() {
            let i = t.indices()[k].entries().iter().position(|&v| v == 1).unwrap();
            let avg: f64 = (0..j)
                .map(|s_| {
                    let x = s_ as f64 / j as f64;
                    ((-x * t.ln_mu_power(k)).exp() * s[s_][i]).norm_sqr()
                })
                .sum::<f64>()
                / j as f64;
            let sum: f64 = t.row(k).iter().map(|v| v.norm_sqr()).sum();
            assert!((avg - sum).abs() <= 1e-8 * avg.max(1.0));
        }
    }

    #[test]
    fn contour_shift_invariance() {
        let (m, sd, kev) = setup(1.0 / 3.0, 0.5);
        let base = fourier_coefficients(&m, &sd, &kev, &small_config(2)).unwrap();
        let shifted = fourier_coefficients(
            &m,
            &sd,
            &kev,
            &FourierConfig {
                contour_angle: Some(base.contour_angle() - 0.1),
                ..small_config(2)
            },
        )
        .unwrap();
        // the zero mode again, from the contour y = 0.1/ln E
        let kev2 = kev.clone().with_sector_angle(base.contour_angle());
        let s = sample_k(&kev2, 0.1, 512).unwrap();
        let lm: Vec<Complex64> = base.indices().iter().map(|m| sd.ln_mu_power(m.entries())).collect();
        let zero = coefficients_on_contour(&s, &lm, base.indices(), 0.1, sd.ln_perron(), 0);
        for k in 0..base.indices().len() {
            for (a, b) in base.row(k).iter().zip(shifted.row(k)) {
                assert!((a - b).norm() <= 1e-8);
            }
            assert!((zero[k][0] - base.kappa(k, 0)).norm() <= 1e-8);
        }
    }

    #[test]
    fn rejects_bad_sizes_and_rational_models() {
        let (m, sd, kev) = setup(1.0 / 3.0, 0.5);
        let bad = FourierConfig {
            fft_size: 48,
            ..small_config(2)
        };
        assert!(fourier_coefficients(&m, &sd, &kev, &bad).is_err());
        let g = catalog::geometric(0.5).unwrap();
        let gsd = SpectralData::compute(&g).unwrap();
        let gk = KEvaluator::new(&g, &gsd, DEFAULT_ITERATIONS, DEFAULT_PHI_ITERATIONS).unwrap();
        assert!(matches!(
            fourier_coefficients(&g, &gsd, &gk, &small_config(2)),
            Err(Error::RationalUnsupported(_))
        ));
    }
}
