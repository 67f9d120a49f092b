//! Small numerical helpers shared by the evaluation kernels.

use num_complex::Complex64;

/// Neumaier-compensated running sum of complex values.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: Complex64,
    comp: Complex64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: Complex64) {
        self.sum.re = neumaier(self.sum.re, x.re, &mut self.comp.re);
        self.sum.im = neumaier(self.sum.im, x.im, &mut self.comp.im);
    }

    #[inline]
    pub fn value(&self) -> Complex64 {
        self.sum + self.comp
    }
}

#[inline]
fn neumaier(sum: f64, x: f64, comp: &mut f64) -> f64 {
    let t = sum + x;
    if sum.abs() >= x.abs() {
        *comp += (sum - t) + x;
    } else {
        *comp += (x - t) + sum;
    }
    t
}

/// Fixed-order pairwise sum; the result does not depend on thread count.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn max_abs(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `y = A x` for a dense row-major real matrix, with compensated accumulation.
pub fn real_matvec(a: &nalgebra::DMatrix<f64>, x: &[Complex64], y: &mut [Complex64]) {
    for (i, yi) in y.iter_mut().enumerate() {
        let mut s = CompensatedSum::default();
        for (j, &xj) in x.iter().enumerate() {
            s.add(xj * a[(i, j)]);
        }
        *yi = s.value();
    }
}

/// `y = A x` for a dense complex matrix.
pub fn complex_matvec(a: &nalgebra::DMatrix<Complex64>, x: &[Complex64], y: &mut [Complex64]) {
    for (i, yi) in y.iter_mut().enumerate() {
        let mut s = CompensatedSum::default();
        for (j, &xj) in x.iter().enumerate() {
            s.add(a[(i, j)] * xj);
        }
        *yi = s.value();
    }
}
