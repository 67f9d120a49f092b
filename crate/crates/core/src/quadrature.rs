//! Reference density by inverting the Laplace transform along the
//! vertical line `Re z = δ`:
//! `d(x) = (1/π)·∫₀^Y Re[Π(δ + iy)·e^{(δ+iy)x}] dy`, trapezoid rule.

use crate::error::{Error, Result};
use crate::model::PgfModel;
use crate::poincare::PoincareEvaluator;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::fmt::Write as _;

/// Below this `x` the truncated integral is not trusted.
pub const RELIABLE_X_MIN: f64 = 0.05;
const TAIL_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureConfig {
    pub cutoff: f64,
    pub nodes: usize,
    pub delta: f64,
    /// Iterations of the Π recurrence per node.
    pub iterations: usize,
    /// Adds the two leading terms of the asymptotic expansion of the
    /// integral beyond the cutoff.
    pub tail_correction: bool,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            cutoff: 400.0,
            nodes: 100_000,
            delta: 0.0,
            iterations: 50,
            tail_correction: true,
        }
    }
}

impl QuadratureConfig {
    fn validate(&self) -> Result<()> {
        if !(self.cutoff > 0.0 && self.cutoff.is_finite()) {
            return Err(Error::Domain(format!("cutoff must be positive, got {}", self.cutoff)));
        }
        if self.nodes < 2 {
            return Err(Error::Domain(format!("need at least 2 nodes, got {}", self.nodes)));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::Domain(format!("shift must be nonnegative, got {}", self.delta)));
        }
        Ok(())
    }
}

/// `Π` sampled on the contour, ready for any `x`.
#[derive(Debug, Clone)]
pub struct ContourSamples {
    n: usize,
    delta: f64,
    step: f64,
    /// `values[j]` is `Π(δ + i·j·step)`.
    values: Vec<Vec<Complex64>>,
    /// `(g(Y), g'(Y))` per component.
    tail: Option<Vec<(Complex64, Complex64)>>,
}

impl ContourSamples {
    pub fn new(model: &PgfModel, config: &QuadratureConfig) -> Result<Self> {
        config.validate()?;
        let ev = PoincareEvaluator::new(model, config.iterations)?;
        let step = config.cutoff / (config.nodes - 1) as f64;
        let points: Vec<Complex64> = (0..config.nodes)
            .map(|j| Complex64::new(config.delta, j as f64 * step))
            .collect();
        let values = ev.pi_grid(&points)?;
        let tail = if config.tail_correction {
            let y = config.cutoff;
            let at = |y: f64| ev.pi_eval(Complex64::new(config.delta, y));
            let (lo, hi) = (at(y - TAIL_STEP)?, at(y + TAIL_STEP)?);
            let g = &values[config.nodes - 1];
            Some(
                (0..ev.n())
                    .map(|i| (g[i], (hi[i] - lo[i]) / (2.0 * TAIL_STEP)))
                    .collect(),
            )
        } else {
            None
        };
        Ok(ContourSamples {
            n: ev.n(),
            delta: config.delta,
            step,
            values,
            tail,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Density at `x` from the stored samples.
    pub fn density(&self, x: f64) -> Result<Vec<f64>> {
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::Domain(format!("density needs x > 0, got {x}")));
        }
        let last = self.values.len() - 1;
        let mut acc = vec![0.0; self.n];
        for (j, v) in self.values.iter().enumerate() {
            let w = if j == 0 || j == last { 0.5 } else { 1.0 };
            let phase = Complex64::from_polar(1.0, j as f64 * self.step * x);
            for (a, p) in acc.iter_mut().zip(v) {
                *a += w * (p * phase).re;
            }
        }
        let grow = (self.delta * x).exp();
        let mut out: Vec<f64> = acc.iter().map(|a| a * self.step * grow / PI).collect();
        if let Some(tail) = &self.tail {
            let y = last as f64 * self.step;
            let e = Complex64::from_polar(1.0, y * x);
            for (o, (g, dg)) in out.iter_mut().zip(tail) {
                let t = e * (Complex64::i() * g / x - dg / (x * x));
                *o += grow * t.re / PI;
            }
        }
        Ok(out)
    }
}

/// Density values on a grid of `x`, one row per point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityCurve {
    pub xs: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    /// Points below `RELIABLE_X_MIN`, where the series route is preferable.
    pub unreliable: Vec<bool>,
}

impl DensityCurve {
    pub fn n_types(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[i]).collect()
    }

    pub fn any_unreliable(&self) -> bool {
        self.unreliable.iter().any(|&u| u)
    }

    /// Trapezoid integral of `x^k·d_i(x)` over the grid.
    pub fn moment(&self, i: usize, k: i32) -> f64 {
        self.xs
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, v)| 0.5 * (x[1] - x[0]) * (x[0].powi(k) * v[0][i] + x[1].powi(k) * v[1][i]))
            .sum()
    }

    /// Cumulative trapezoid integral of `d_i`, taking `d_i = 0` at `x = 0`.
    pub fn cdf(&self, i: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.xs.len());
        let mut acc = 0.5 * self.xs[0] * self.values[0][i];
        out.push(acc);
        for k in 1..self.xs.len() {
            acc += 0.5 * (self.xs[k] - self.xs[k - 1]) * (self.values[k][i] + self.values[k - 1][i]);
            out.push(acc);
        }
        out
    }

    /// CSV with header `x,d_1,…,d_N` and 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = density_header(self.n_types());
        for (x, row) in self.xs.iter().zip(&self.values) {
            out.push_str(&density_row(*x, row));
        }
        out
    }
}

pub fn density_header(n: usize) -> String {
    let mut s = String::from("x");
    for i in 1..=n {
        let _ = write!(s, ",d_{i}");
    }
    s.push('\n');
    s
}

pub fn density_row(x: f64, row: &[f64]) -> String {
    let mut s = format!("{x:.16e}");
    for v in row {
        let _ = write!(s, ",{v:.16e}");
    }
    s.push('\n');
    s
}

pub fn density_quadrature(model: &PgfModel, config: &QuadratureConfig, x: f64) -> Result<Vec<f64>> {
    ContourSamples::new(model, config)?.density(x)
}

/// The density on a grid, sharing one set of contour samples.
pub fn density_quadrature_grid(
    model: &PgfModel,
    config: &QuadratureConfig,
    xs: &[f64],
) -> Result<DensityCurve> {
    let samples = ContourSamples::new(model, config)?;
    curve_from_samples(&samples, xs)
}

pub fn curve_from_samples(samples: &ContourSamples, xs: &[f64]) -> Result<DensityCurve> {
    let values = xs
        .par_iter()
        .enumerate()
        .map(|(k, &x)| {
            samples.density(x).map_err(|e| Error::AtIndex {
                index: k,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DensityCurve {
        xs: xs.to_vec(),
        values,
        unreliable: xs.iter().map(|&x| x < RELIABLE_X_MIN).collect(),
    })
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}
