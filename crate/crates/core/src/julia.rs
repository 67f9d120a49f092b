//! The modified filled Julia set `J₁ = {z : Pᵗ(1 − z·b) → 0}`, its raster
//! and the critical angle of the sector it contains at the origin.

use crate::error::{Error, Result};
use crate::model::{EvalScratch, PgfModel};
use crate::numeric::max_abs;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

pub const DEFAULT_RADII: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];
pub const DEFAULT_ANGULAR_RESOLUTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JuliaParams {
    pub t_max: usize,
    pub rho: f64,
    pub r_escape: f64,
}

impl Default for JuliaParams {
    fn default() -> Self {
        JuliaParams {
            t_max: 500,
            rho: 0.5,
            r_escape: 10.0,
        }
    }
}

impl JuliaParams {
    fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0 && self.r_escape > 1.0 && self.t_max > 0) {
            return Err(Error::Domain(format!(
                "need 0 < rho < 1 < R_escape and T_max > 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Iterates `w ← P(w)` from `1 − z·b`. Returns `(true, t)` once
/// `|w|∞ < rho`, `(false, t)` on escape past `R_escape` or a failed
/// evaluation, and `(false, T_max)` when undecided.
pub fn j1_membership(
    model: &PgfModel,
    b: &[f64],
    z: Complex64,
    params: &JuliaParams,
) -> (bool, usize) {
    let mut scratch = EvalScratch::default();
    membership_with(model, b, z, params, &mut scratch)
}

fn membership_with(
    model: &PgfModel,
    b: &[f64],
    z: Complex64,
    params: &JuliaParams,
    scratch: &mut EvalScratch,
) -> (bool, usize) {
    let mut w: Vec<Complex64> = b.iter().map(|bi| 1.0 - z * bi).collect();
    let mut next = vec![Complex64::default(); w.len()];
    for t in 0..=params.t_max {
        let size = max_abs(&w);
        if size < params.rho {
            return (true, t);
        }
        if !(size <= params.r_escape) || t == params.t_max {
            return (false, t);
        }
        if model.eval_into(&w, &mut next, scratch).is_err() {
            return (false, t);
        }
        std::mem::swap(&mut w, &mut next);
    }
    (false, params.t_max)
}

#[derive(Debug, Clone, Serialize)]
pub struct AngleEstimate {
    /// Minimum over radii of the per-radius angles.
    pub angle: f64,
    /// `(radius, largest verified half-angle)` pairs.
    pub per_radius: Vec<(f64, f64)>,
    pub resolution: f64,
}

/// Conservative estimate of the critical angle: for each radius the
/// largest θ on the angular grid with every `r·e^{±iθ̃}`, `θ̃ ≤ θ`, a
/// member; then the minimum over radii.
pub fn critical_angle(
    model: &PgfModel,
    b: &[f64],
    radii: &[f64],
    resolution: f64,
    params: &JuliaParams,
) -> Result<AngleEstimate> {
    params.validate()?;
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Domain("radii must be positive and nonempty".into()));
    }
    if !(resolution > 0.0 && resolution < 1.0) {
        return Err(Error::Domain(format!("angular resolution {resolution} out of range")));
    }
    let steps = (PI / resolution).floor() as usize;
    let per_radius: Vec<(f64, Option<f64>)> = radii
        .par_iter()
        .map(|&r| {
            let mut scratch = EvalScratch::default();
            let mut member = |theta: f64| {
                membership_with(model, b, Complex64::from_polar(r, theta), params, &mut scratch).0
            };
            if !member(0.0) {
                return (r, None);
            }
            let mut k = 0;
            while k < steps {
                let th = (k + 1) as f64 * resolution;
                if !(member(th) && member(-th)) {
                    break;
                }
                k += 1;
            }
            (r, Some(k as f64 * resolution))
        })
        .collect();
    let smallest = radii.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut out = Vec::with_capacity(per_radius.len());
    for (r, a) in per_radius {
        match a {
            Some(a) => out.push((r, a)),
            None if r == smallest => {
                return Err(Error::numeric(format!(
                    "membership of z = {r} undecided within {} iterations",
                    params.t_max
                )))
            }
            None => out.push((r, 0.0)),
        }
    }
    let angle = out.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    Ok(AngleEstimate {
        angle,
        per_radius: out,
        resolution,
    })
}

/// Critical angle with the default radii, resolution and parameters.
pub fn default_critical_angle(model: &PgfModel, b: &[f64]) -> Result<AngleEstimate> {
    critical_angle(
        model,
        b,
        &DEFAULT_RADII,
        DEFAULT_ANGULAR_RESOLUTION,
        &JuliaParams::default(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Window {
    pub center: [f64; 2],
    pub width: f64,
    pub height: f64,
}

impl Window {
    pub fn new(center: Complex64, width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(Error::Domain("window must have positive size".into()));
        }
        Ok(Window {
            center: [center.re, center.im],
            width,
            height,
        })
    }

    /// Square window centred at the origin sized to hold J₁ at zoom 1,
    /// reduced by `zoom` about the same centre.
    pub fn default_for(b: &[f64], zoom: f64) -> Result<Self> {
        let bmin = b.iter().cloned().fold(f64::INFINITY, f64::min);
        let side = 8.0 / bmin / zoom;
        Window::new(Complex64::new(0.0, 0.0), side, side)
    }

    /// Centre of pixel `(col, row)`; row 0 is the top edge.
    pub fn pixel(&self, col: usize, row: usize, cols: usize, rows: usize) -> Complex64 {
        let x = self.center[0] - 0.5 * self.width + (col as f64 + 0.5) * self.width / cols as f64;
        let y = self.center[1] + 0.5 * self.height - (row as f64 + 0.5) * self.height / rows as f64;
        Complex64::new(x, y)
    }
}

#[derive(Debug, Clone)]
pub struct JuliaRaster {
    pub window: Window,
    pub cols: usize,
    pub rows: usize,
    pub params: JuliaParams,
    pub member: Vec<bool>,
    pub time: Vec<u32>,
}

pub fn render_j1(
    model: &PgfModel,
    b: &[f64],
    window: &Window,
    cols: usize,
    rows: usize,
    params: &JuliaParams,
) -> Result<JuliaRaster> {
    params.validate()?;
    if cols == 0 || rows == 0 {
        return Err(Error::Domain("raster must have at least one pixel".into()));
    }
    let cells: Vec<(bool, u32)> = (0..rows)
        .into_par_iter()
        .flat_map_iter(|row| {
            let mut scratch = EvalScratch::default();
            (0..cols)
                .map(|col| {
                    let z = window.pixel(col, row, cols, rows);
                    let (m, t) = membership_with(model, b, z, params, &mut scratch);
                    (m, t as u32)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(JuliaRaster {
        window: *window,
        cols,
        rows,
        params: *params,
        member: cells.iter().map(|c| c.0).collect(),
        time: cells.iter().map(|c| c.1).collect(),
    })
}

impl JuliaRaster {
    pub fn member_fraction(&self) -> f64 {
        self.member.iter().filter(|m| **m).count() as f64 / self.member.len() as f64
    }

    pub fn is_member(&self, col: usize, row: usize) -> bool {
        self.member[row * self.cols + col]
    }

    /// Binary PGM: members shaded by convergence time (fast = bright),
    /// non-members black.
    pub fn to_pgm(&self) -> Vec<u8> {
        let tmax = self
            .member
            .iter()
            .zip(&self.time)
            .filter(|(m, _)| **m)
            .map(|(_, t)| *t)
            .max()
            .unwrap_or(1)
            .max(1) as f64;
        let mut out = format!("P5\n{} {}\n255\n", self.cols, self.rows).into_bytes();
        out.extend(self.member.iter().zip(&self.time).map(|(m, t)| {
            if *m {
                (255.0 - 191.0 * (*t as f64 / tmax)).round() as u8
            } else {
                0
            }
        }));
        out
    }
}
