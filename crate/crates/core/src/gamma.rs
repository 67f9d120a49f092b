//! Complex log-gamma via the Lanczos approximation (g = 7, nine terms),
//! with reflection for the left half-plane.

use num_complex::Complex64;
use std::f64::consts::PI;

const G: f64 = 7.0;
const COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(z)` modulo `2πi`. Returns an infinite real part at the poles.
pub fn ln_gamma(z: Complex64) -> Complex64 {
    if z.im == 0.0 && z.re <= 0.0 && z.re == z.re.round() {
        Complex64::new(f64::INFINITY, 0.0)
    } else if z.re < 0.5 {
        // Γ(z) Γ(1-z) = π / sin(πz)
        Complex64::new(PI.ln(), 0.0) - ln_sin_pi(z) - ln_gamma(1.0 - z)
    } else {
        let z = z - 1.0;
        let mut x = Complex64::new(COEF[0], 0.0);
        for (i, &c) in COEF.iter().enumerate().skip(1) {
            x += c / (z + i as f64);
        }
        let t = z + G + 0.5;
        0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
    }
}

/// `1 / Γ(z)`, exactly zero at the poles.
pub fn recip_gamma(z: Complex64) -> Complex64 {
    let l = ln_gamma(z);
    if l.re.is_infinite() {
        Complex64::new(0.0, 0.0)
    } else {
        (-l).exp()
    }
}

/// `ln sin(πz)` without overflow for large `|Im z|`.
fn ln_sin_pi(z: Complex64) -> Complex64 {
    let i = Complex64::i();
    if z.im >= 0.0 {
        // sin(πz) = e^{-iπz} (1 - e^{2iπz}) i/2
        -i * PI * z + (1.0 - (2.0 * i * PI * z).exp()).ln() + (0.5 * i).ln()
    } else {
        // sin(πz) = e^{iπz} (1 - e^{-2iπz}) (-i/2)
        i * PI * z + (1.0 - (-2.0 * i * PI * z).exp()).ln() + (-0.5 * i).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close_mod_2pi(a: Complex64, b: Complex64, tol: f64) -> bool {
        let d = a - b;
        let k = (d.im / (2.0 * PI)).round();
        (d - c(0.0, 2.0 * PI * k)).norm() <= tol
    }

    #[test]
    fn real_values() {
        assert!(ln_gamma(c(1.0, 0.0)).norm() < 1e-14);
        assert!(ln_gamma(c(2.0, 0.0)).norm() < 1e-14);
        assert!((ln_gamma(c(5.0, 0.0)).re - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(c(0.5, 0.0)).re - 0.5 * PI.ln()).abs() < 1e-14);
        // Γ(-1/2) = -2√π
        let v = recip_gamma(c(-0.5, 0.0));
        assert!((v - c(-1.0 / (2.0 * PI.sqrt()), 0.0)).norm() < 1e-14);
        // 170! near the overflow limit
        let ln170: f64 = (1..170).map(|k| (k as f64).ln()).sum();
        assert!((ln_gamma(c(170.0, 0.0)).re - ln170).abs() < 1e-10);
    }

    #[test]
    fn poles_give_zero_reciprocal() {
        for k in 0..5 {
            assert_eq!(recip_gamma(c(-(k as f64), 0.0)), c(0.0, 0.0));
        }
    }

    #[test]
    fn modulus_on_imaginary_lines() {
        // |Γ(1+i)|^2 = π / sinh π
        let v = ln_gamma(c(1.0, 1.0));
        assert!((2.0 * v.re - (PI / PI.sinh()).ln()).abs() < 1e-14);
        // |Γ(1/2 + iy)|^2 = π / cosh(πy), far up the line
        for y in [3.0, 40.0, 150.0, 400.0] {
            let v = ln_gamma(c(0.5, y));
            let want = 0.5 * (PI.ln() - (PI * y - 2f64.ln() + (-2.0 * PI * y).exp().ln_1p()));
            assert!((v.re - want).abs() < 1e-12 * (1.0 + want.abs()), "y={y}");
            let v = ln_gamma(c(0.5, -y));
            assert!((v.re - want).abs() < 1e-12 * (1.0 + want.abs()), "y=-{y}");
        }
    }

    #[test]
    fn stirling_agrees_far_out() {
        let z = c(30.0, 200.0);
        let w = 1.0 / z;
        let stirling = (z - 0.5) * z.ln() - z + 0.5 * (2.0 * PI).ln() + w / 12.0
            - w * w * w / 360.0
            + w.powi(5) / 1260.0;
        assert!(close_mod_2pi(ln_gamma(z), stirling, 1e-11));
    }

    #[test]
    fn conjugate_symmetry() {
        let z = c(-2.3, 1.7);
        assert!(close_mod_2pi(ln_gamma(z.conj()), ln_gamma(z).conj(), 1e-12));
    }

    proptest! {
        #[test]
        fn recurrence(re in -8.0f64..30.0, im in -60.0f64..60.0) {
            let z = c(re, im);
            prop_assume!((z - z.re.round()).norm() > 1e-3 || z.re > 0.5);
            let lhs = ln_gamma(z + 1.0);
            let rhs = ln_gamma(z) + z.ln();
            prop_assert!(close_mod_2pi(lhs, rhs, 1e-11 * (1.0 + lhs.norm())));
        }

        #[test]
        fn reflection(re in -0.45f64..0.45, im in -30.0f64..30.0) {
            let z = c(re, im);
            prop_assume!(z.norm() > 1e-3);
            let lhs = ln_gamma(z) + ln_gamma(1.0 - z);
            let rhs = c(PI.ln(), 0.0) - (PI * z).sin().ln();
            prop_assert!(close_mod_2pi(lhs, rhs, 1e-11 * (1.0 + lhs.norm())));
        }
    }
}
