//! Scalar special functions used by the heat kernels and the spectral time
//! integrals.
//!
//! All three functions are total on finite input: they never return NaN.

use std::f64::consts::PI;

/// √π / 2, the value of ∫₀^∞ e^{−θ²} dθ.
pub const HALF_SQRT_PI: f64 = 0.886_226_925_452_758_f64;

/// E(z) = ∫_z^∞ e^{−θ²} dθ = (√π/2)·erfc(z).
pub fn upper_gauss_integral(z: f64) -> f64 {
    if z.is_nan() {
        return 0.0;
    }
    HALF_SQRT_PI * libm::erfc(z)
}

/// e^{z²}·E(z), evaluated without forming e^{z²} for large arguments.
///
/// Decreasing on z ≥ 0 from √π/2 towards 1/(2z).
pub fn scaled_upper_gauss(z: f64) -> f64 {
    if z < 2.0 {
        return (z * z).exp() * upper_gauss_integral(z);
    }
    // Continued fraction: e^{z²}E(z) = ½ / (z + (1/2)/(z + 1/(z + (3/2)/(z + ...)))).
    let mut tail = z;
    for k in (1..=120).rev() {
        tail = z + 0.5 * k as f64 / tail;
    }
    0.5 / tail
}

/// Dawson's integral D(x) = e^{−x²} ∫₀^x e^{t²} dt.
pub fn dawson(x: f64) -> f64 {
    if x.is_nan() {
        return 0.0;
    }
    let ax = x.abs();
    let value = if ax <= 6.0 {
        dawson_series(ax)
    } else {
        dawson_asymptotic(ax)
    };
    value.copysign(x)
}

// ∫₀^x e^{t²} dt = Σ x^{2k+1} / (k!(2k+1)); every term is positive.
fn dawson_series(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let x2 = x * x;
    let mut power = x;
    let mut sum = x;
    for k in 1..400 {
        power *= x2 / k as f64;
        let term = power / (2 * k + 1) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    (-x2).exp() * sum
}

// D(x) ~ 1/(2x) Σ (2k−1)!! / (2x²)^k, truncated at the smallest term.
fn dawson_asymptotic(x: f64) -> f64 {
    let inv = 1.0 / (2.0 * x * x);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        let next = term * (2 * k - 1) as f64 * inv;
        if next >= term || next < 1e-18 * sum {
            break;
        }
        term = next;
        sum += term;
    }
    sum / (2.0 * x)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_integral_reference_values() {
        assert!((upper_gauss_integral(0.0) - PI.sqrt() / 2.0).abs() < 1e-15);
        // adaptive quadrature (mpmath, 40 digits)
        let e1 = 0.139_402_792_640_330_99;
        assert!((upper_gauss_integral(1.0) / e1 - 1.0).abs() < 1e-12);
        assert_eq!(upper_gauss_integral(40.0), 0.0);
        assert_eq!(upper_gauss_integral(f64::INFINITY), 0.0);
        assert!((upper_gauss_integral(-30.0) - PI.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn gauss_integral_derivative_is_minus_gaussian() {
        let h = 1e-5;
        for &z in &[-2.0, -0.3, 0.0, 0.7, 1.5, 3.0] {
            let fd = (upper_gauss_integral(z + h) - upper_gauss_integral(z - h)) / (2.0 * h);
            assert!((fd + (-z * z).exp()).abs() < 1e-8, "z={z}");
        }
    }

    #[test]
    fn scaled_reference_values() {
        // mpmath, e^{z²}·(√π/2)·erfc(z) at 40 digits
        let cases = [
            (0.5, 0.545_641_360_765_047),
            (2.0, 0.226_338_524_990_587_3),
            (5.0, 0.098_109_430_731_538_79),
            (10.0, 0.049_753_659_391_223_49),
        ];
        for (z, want) in cases {
            let got = scaled_upper_gauss(z);
            assert!((got / want - 1.0).abs() < 1e-12, "z={z} got={got}");
        }
        assert!((scaled_upper_gauss(0.0) - HALF_SQRT_PI).abs() < 1e-15);
        assert!(scaled_upper_gauss(2.0) > scaled_upper_gauss(3.0));
        assert!((scaled_upper_gauss(1e8) * 2e8 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scaled_is_continuous_at_switch() {
        let below = scaled_upper_gauss(2.0 - f64::EPSILON);
        let above = scaled_upper_gauss(2.0);
        assert!((below / above - 1.0).abs() < 1e-14);
    }

    #[test]
    fn dawson_reference_values() {
        let cases = [
            (0.5, 0.424_436_383_502_022_3),
            (1.0, 0.538_079_506_912_768_4),
            (3.0, 0.178_271_030_610_558_3),
            (10.0, 0.050_253_847_187_598_53),
            (0.924_138_873_004_591_8, 0.541_044_224_635_181_7),
        ];
        for (x, want) in cases {
            let got = dawson(x);
            assert!((got / want - 1.0).abs() < 1e-12, "x={x} got={got}");
        }
        assert_eq!(dawson(0.0), 0.0);
        assert_eq!(dawson(-1.3), -dawson(1.3));
    }

    #[test]
    fn dawson_satisfies_its_ode() {
        let h = 1e-5;
        for &x in &[0.1, 0.9, 2.0, 5.9, 6.1, 12.0] {
            let fd = (dawson(x + h) - dawson(x - h)) / (2.0 * h);
            assert!((fd - (1.0 - 2.0 * x * dawson(x))).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn total_on_extreme_input() {
        for &x in &[f64::MAX, -f64::MAX, 1e300, -1e-300, 0.0] {
            assert!(!dawson(x).is_nan());
            assert!(!upper_gauss_integral(x).is_nan());
            assert!(!scaled_upper_gauss(x.abs()).is_nan());
        }
    }
}
