//! The Poincaré function Π, the Laplace transform of the limit law along
//! the ray `z·b`, by backward composition of the linearised maps
//! `w ↦ E⁻¹·E·w − Eᵗ·P₁(E^{−t−1}·w)`.

use crate::error::{Error, Result};
use crate::model::{EvalScratch, LocalExpansion, PgfModel};
use crate::numeric::real_matvec;
use crate::spectral::perron_data;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

pub const DEFAULT_ITERATIONS: usize = 64;
/// Beyond this modulus evaluation goes through the functional equation.
pub const CORE_RADIUS: f64 = 10.0;
/// Distance kept from the critical angle when evaluating left of the axis.
pub const SECTOR_GUARD: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct PoincareEvaluator {
    model: PgfModel,
    at_one: LocalExpansion,
    mean_over_e: DMatrix<f64>,
    perron: f64,
    right: Vec<f64>,
    iterations: usize,
    sector_angle: Option<f64>,
}

impl PoincareEvaluator {
    pub fn new(model: &PgfModel, iterations: usize) -> Result<Self> {
        if iterations == 0 {
            return Err(Error::Domain("iteration count must be at least 1".into()));
        }
        let at_one = model.expansion_at_one();
        let (perron, _, right) = perron_data(&at_one.linear)?;
        Ok(PoincareEvaluator {
            model: model.clone(),
            mean_over_e: &at_one.linear / perron,
            at_one,
            perron,
            right: right.iter().copied().collect(),
            iterations,
            sector_angle: None,
        })
    }

    /// Allows evaluation left of the imaginary axis for
    /// `|arg z| < angle − SECTOR_GUARD`, given a critical-angle estimate.
    pub fn with_sector_angle(mut self, angle: f64) -> Self {
        self.sector_angle = Some(angle);
        self
    }

    pub fn n(&self) -> usize {
        self.right.len()
    }

    pub fn perron(&self) -> f64 {
        self.perron
    }

    pub fn right(&self) -> &[f64] {
        &self.right
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn model(&self) -> &PgfModel {
        &self.model
    }

    fn check_domain(&self, z: Complex64) -> Result<()> {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::Domain(format!("non-finite argument {z}")));
        }
        if z.re >= 0.0 {
            return Ok(());
        }
        match self.sector_angle {
            Some(theta) if z.arg().abs() < theta - SECTOR_GUARD => Ok(()),
            Some(theta) => Err(Error::Domain(format!(
                "arg z = {:.4} lies outside the sector |arg z| < {:.4}",
                z.arg(),
                theta - SECTOR_GUARD
            ))),
            None => Err(Error::Domain(format!(
                "Re z = {} < 0 needs a critical-angle estimate",
                z.re
            ))),
        }
    }

    /// `Π(z·b)`.
    pub fn pi_eval(&self, z: Complex64) -> Result<Vec<Complex64>> {
        self.check_domain(z)?;
        if z.norm() > CORE_RADIUS {
            let k = ((z.norm() / CORE_RADIUS).ln() / self.perron.ln()).ceil() as i64;
            return self.pi_extend_large(z, k);
        }
        self.pi_core(z, self.iterations)
    }

    /// The recurrence with an explicit iteration count, no routing.
    pub fn pi_core(&self, z: Complex64, iterations: usize) -> Result<Vec<Complex64>> {
        let n = self.n();
        let mut scratch = EvalScratch::default();
        let mut w: Vec<Complex64> = self.right.iter().map(|b| z * b).collect();
        let mut y = vec![Complex64::default(); n];
        let mut p1 = vec![Complex64::default(); n];
        let mut lin = vec![Complex64::default(); n];
        for t in (0..iterations).rev() {
            let shrink = self.perron.powi(-(t as i32) - 1);
            let grow = self.perron.powi(t as i32);
            for (yi, wi) in y.iter_mut().zip(&w) {
                *yi = wi * shrink;
            }
            self.at_one.eval_higher_into(&y, &mut p1, &mut scratch)?;
            real_matvec(&self.mean_over_e, &w, &mut lin);
            for i in 0..n {
                w[i] = lin[i] - p1[i] * grow;
            }
            if !w.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::numeric(format!(
                    "Poincaré recurrence overflowed at z = {z}"
                )));
            }
        }
        Ok(w.into_iter().map(|v| 1.0 - v).collect())
    }

    /// `Pᵏ(Π(z / Eᵏ))`.
    pub fn pi_extend_large(&self, z: Complex64, k: i64) -> Result<Vec<Complex64>> {
        if k < 0 {
            return Err(Error::Domain(format!("lift count {k} is negative")));
        }
        let k = k as i32;
        let mut v = self.pi_core(z * self.perron.powi(-k), self.iterations)?;
        let mut next = vec![Complex64::default(); self.n()];
        let mut scratch = EvalScratch::default();
        for _ in 0..k {
            self.model.eval_into(&v, &mut next, &mut scratch)?;
            std::mem::swap(&mut v, &mut next);
        }
        Ok(v)
    }

    /// Elementwise `pi_eval`, in parallel. Errors carry the point index.
    pub fn pi_grid(&self, points: &[Complex64]) -> Result<Vec<Vec<Complex64>>> {
        points
            .par_iter()
            .enumerate()
            .map(|(i, &z)| {
                self.pi_eval(z).map_err(|e| Error::AtIndex {
                    index: i,
                    source: Box::new(e),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sup(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    fn two_type() -> PoincareEvaluator {
        PoincareEvaluator::new(&catalog::two_type_quadratic(1.0 / 3.0, 0.5).unwrap(), 64).unwrap()
    }

    /// Π(z) = 1/(1+z) for the p = 1/2 geometric law: its iterates are
    /// Möbius maps f_t(z) = p^t z / (1 - (1 - p^t) z).
    fn geometric_pi(z: Complex64) -> Complex64 {
        1.0 / (1.0 + z)
    }

    #[test]
    fn value_at_origin() {
        let ev = two_type();
        let v = ev.pi_eval(c(0.0, 0.0)).unwrap();
        assert!(sup(&v, &[c(1.0, 0.0), c(1.0, 0.0)]) < 1e-15);
    }

    #[test]
    fn geometric_oracle() {
        let ev = PoincareEvaluator::new(&catalog::geometric(0.5).unwrap(), 64).unwrap();
        assert!((ev.right()[0] - 1.0).abs() < 1e-14);
        for z in [c(1.0, 2.0), c(0.1, 0.0), c(3.0, -7.0), c(0.0, 9.5), c(40.0, 30.0)] {
            let v = ev.pi_eval(z).unwrap();
            assert!((v[0] - geometric_pi(z)).norm() < 1e-12, "z={z}");
        }
        let v = ev.pi_extend_large(c(100.0, 0.0), 5).unwrap();
        assert!((v[0] - 1.0 / 101.0).norm() < 1e-10);
    }

    #[test]
    fn functional_equation_at_one() {
        let ev = two_type();
        let pi1 = ev.pi_eval(c(1.0, 0.0)).unwrap();
        let lhs = ev.model().eval(&pi1).unwrap();
        let rhs = ev.pi_eval(c(ev.perron(), 0.0)).unwrap();
        assert!(sup(&lhs, &rhs) <= 1e-10);
    }

    #[test]
    fn lifts_agree() {
        let ev = two_type();
        let a = ev.pi_extend_large(c(50.0, 0.0), 3).unwrap();
        let b = ev.pi_extend_large(c(50.0, 0.0), 4).unwrap();
        assert!(sup(&a, &b) < 1e-9);
        let z = c(2.0, 1.0);
        assert_eq!(ev.pi_extend_large(z, 0).unwrap(), ev.pi_eval(z).unwrap());
        assert!(ev.pi_extend_large(z, -1).is_err());
    }

    #[test]
    fn derivative_at_origin_is_minus_b() {
        let ev = two_type();
        let h = 1e-5;
        let plus = ev.pi_eval(c(h, 0.0)).unwrap();
        // Π extends analytically across the origin, so use the imaginary axis
        let up = ev.pi_eval(c(0.0, h)).unwrap();
        let down = ev.pi_eval(c(0.0, -h)).unwrap();
        for i in 0..2 {
            let d = (up[i] - down[i]) / c(0.0, 2.0 * h);
            assert!((d + ev.right()[i]).norm() < 1e-6);
            let fwd = (plus[i] - 1.0) / h;
            assert!((fwd + ev.right()[i]).norm() < 1e-4);
        }
    }

    #[test]
    fn decays_along_the_real_axis() {
        let ev = two_type();
        let mut prev = f64::INFINITY;
        for k in 0..=99 {
            let x = 1.0 + k as f64;
            let v = ev.pi_eval(c(x, 0.0)).unwrap();
            let m = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(m < prev, "x={x}");
            prev = m;
        }
        assert!(prev < 0.05);
    }

    #[test]
    fn converges_geometrically_in_t() {
        let ev = two_type();
        let z = c(3.0, 2.0);
        let mut diffs = Vec::new();
        for t in [4, 8, 16] {
            let a = ev.pi_core(z, t).unwrap();
            let b = ev.pi_core(z, 2 * t).unwrap();
            diffs.push(sup(&a, &b));
        }
        // the error after t steps shrinks like E^(-t)
        assert!(diffs[1] < diffs[0] * 0.25 && diffs[2] < diffs[1] * 0.05, "{diffs:?}");
    }

    #[test]
    fn grid_behaviour() {
        let ev = two_type();
        assert!(ev.pi_grid(&[]).unwrap().is_empty());
        let pts = [c(1.0, 1.0), c(1.0, 1.0)];
        let out = ev.pi_grid(&pts).unwrap();
        assert_eq!(out[0], out[1]);
        let bad = [c(1.0, 0.0), c(-1.0, 0.0)];
        match ev.pi_grid(&bad) {
            Err(Error::AtIndex { index, .. }) => assert_eq!(index, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grid_on_imaginary_segment_is_bounded() {
        let ev = two_type();
        let pts: Vec<Complex64> = (0..100_000).map(|k| c(0.0, 400.0 * k as f64 / 99_999.0)).collect();
        let out = ev.pi_grid(&pts).unwrap();
        let m = out.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(m <= 1.0 + 1e-12);
        // bitwise equal to sequential evaluation
        for k in [0, 1234, 99_999] {
            assert_eq!(out[k], ev.pi_eval(pts[k]).unwrap());
        }
    }

    #[test]
    fn sector_guard() {
        let ev = two_type();
        assert!(ev.pi_eval(c(-0.1, 1.0)).is_err());
        let ev = ev.with_sector_angle(2.0);
        let z = Complex64::from_polar(2.0, 1.8);
        let v = ev.pi_eval(z).unwrap();
        let lhs = ev.model().eval(&v).unwrap();
        let rhs = ev.pi_eval(z * ev.perron()).unwrap();
        assert!(sup(&lhs, &rhs) < 1e-9);
        assert!(ev.pi_eval(Complex64::from_polar(2.0, 1.97)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn functional_equation(re in 0.0f64..10.0, im in -10.0f64..10.0) {
            let ev = two_type();
            let z = c(re, im);
            let lhs = ev.model().eval(&ev.pi_eval(z).unwrap()).unwrap();
            let rhs = ev.pi_eval(z * ev.perron()).unwrap();
            prop_assert!(sup(&lhs, &rhs) <= 1e-9);
        }
    }
}
