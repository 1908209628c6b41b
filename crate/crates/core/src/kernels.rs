//! Heat kernels K₀, K₁ of the linearized forward map
//! W(x, τ) = ∫_ω K₀(x, y; τ) f₀(y) + K₁(x, y; τ) f₁(y) dy,
//! their x-derivatives, and an independent time-quadrature oracle.
//!
//! Both kernels depend on (x, y) through g = |x − y| + |y|, the length of the
//! path spot → y → x, and through z = g/(σ₀√(2τ)).

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Result, VolcalError};
use crate::model::ModelParams;
use crate::quadrature::GaussLegendre;
use crate::special::upper_gauss_integral;

/// Exponents below this are flushed to zero.
const EXP_FLOOR: f64 = -700.0;

pub(crate) fn exp_floor(e: f64) -> f64 {
    if e < EXP_FLOOR {
        0.0
    } else {
        e.exp()
    }
}

/// Spot, baseline volatility and one time-to-expiry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub s_star: f64,
    pub sigma0: f64,
    pub tau: f64,
}

impl KernelParams {
    pub fn new(s_star: f64, sigma0: f64, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(VolcalError::domain(format!("kernel time must be positive, got {tau}")));
        }
        if !(sigma0 > 0.0) || !(s_star > 0.0) {
            return Err(VolcalError::domain("kernel needs positive spot and volatility"));
        }
        Ok(KernelParams { s_star, sigma0, tau })
    }

    pub fn from_model(params: &ModelParams, tau: f64) -> Result<Self> {
        KernelParams::new(params.s_star, params.sigma0, tau)
    }

    /// S_* = s*/(σ₀²√π).
    pub fn scale(&self) -> f64 {
        self.s_star / (self.sigma0 * self.sigma0 * PI.sqrt())
    }

    /// 2τσ₀², the Gaussian variance scale.
    fn two_var(&self) -> f64 {
        2.0 * self.tau * self.sigma0 * self.sigma0
    }

    fn z(&self, g: f64) -> f64 {
        g / (self.sigma0 * (2.0 * self.tau).sqrt())
    }
}

pub(crate) fn path_length(x: f64, y: f64) -> f64 {
    (x - y).abs() + y.abs()
}

/// K₀ = S_*·E(g/(σ₀√(2τ))).
pub fn kernel_k0(x: f64, y: f64, kp: &KernelParams) -> f64 {
    kp.scale() * upper_gauss_integral(kp.z(path_length(x, y)))
}

/// K₁ = ½S_*·(√τ/(√2σ₀)(|y| − |x−y|)e^{−g²/(2τσ₀²)} + ((x² − 2xy)/σ₀² + τ)E(z)).
pub fn kernel_k1(x: f64, y: f64, kp: &KernelParams) -> f64 {
    let g = path_length(x, y);
    let s2 = kp.sigma0 * kp.sigma0;
    let gauss = exp_floor(-g * g / kp.two_var());
    let first = kp.tau.sqrt() / (SQRT_2 * kp.sigma0) * (y.abs() - (x - y).abs()) * gauss;
    let second = ((x * x - 2.0 * x * y) / s2 + kp.tau) * upper_gauss_integral(kp.z(g));
    0.5 * kp.scale() * (first + second)
}

/// Regular part of ∂²K₀/∂x² (for x ≠ y): S_*·g/(σ₀³√(2τ)·τ)·e^{−g²/(2τσ₀²)}.
pub fn kernel_k0_xx(x: f64, y: f64, kp: &KernelParams) -> f64 {
    let g = path_length(x, y);
    let s2 = kp.sigma0 * kp.sigma0;
    kp.scale() / (kp.sigma0 * (2.0 * kp.tau).sqrt()) * g / (kp.tau * s2) * exp_floor(-g * g / kp.two_var())
}

/// Regular part of ∂²K₁/∂x² (for x ≠ y):
/// s*/(σ₀³√π)·(|y|/(√(2τ)σ₀²)·e^{−g²/(2τσ₀²)} + E(z)/σ₀).
pub fn kernel_k1_xx(x: f64, y: f64, kp: &KernelParams) -> f64 {
    let g = path_length(x, y);
    let s0 = kp.sigma0;
    let pref = kp.s_star / (s0 * s0 * s0 * PI.sqrt());
    let gauss = exp_floor(-g * g / kp.two_var());
    pref * (y.abs() / ((2.0 * kp.tau).sqrt() * s0 * s0) * gauss + upper_gauss_integral(kp.z(g)) / s0)
}

/// Jumps of ∂K/∂x across x = y, giving the local terms
/// ∂²ₓ∫K₀f₀ ∋ c₀(x)f₀(x) and ∂²ₓ∫K₁f₁ ∋ c₁(x)f₁(x).
pub fn kernel_jumps(x: f64, kp: &KernelParams) -> (f64, f64) {
    let gauss = exp_floor(-x * x / kp.two_var());
    let c0 = -2.0 * kp.scale() / (kp.sigma0 * (2.0 * kp.tau).sqrt()) * gauss;
    (c0, kp.tau * c0)
}

/// Direct evaluation of
/// (s*/(2πσ₀²))∫₀^τ (τ−θ)^{−1/2}e^{−(x−y)²/(2σ₀²(τ−θ))} θ^{order−1/2} e^{−y²/(2σ₀²θ)} dθ
/// after θ = τ sin²φ, with Gauss–Legendre panels doubled until two successive
/// sums agree to 1e-11 relative.
pub fn kernel_quadrature_oracle(x: f64, y: f64, kp: &KernelParams, order: u32) -> Result<f64> {
    if order > 1 {
        return Err(VolcalError::domain(format!("kernel order must be 0 or 1, got {order}")));
    }
    let s2 = kp.sigma0 * kp.sigma0;
    let dx2 = (x - y) * (x - y) / (2.0 * s2 * kp.tau);
    let y2 = y * y / (2.0 * s2 * kp.tau);
    let integrand = |phi: f64| {
        let (s, c) = phi.sin_cos();
        let (s_sq, c_sq) = (s * s, c * c);
        let mut e = 0.0;
        if dx2 > 0.0 {
            if c_sq == 0.0 {
                return 0.0;
            }
            e -= dx2 / c_sq;
        }
        if y2 > 0.0 {
            if s_sq == 0.0 {
                return 0.0;
            }
            e -= y2 / s_sq;
        }
        let weight = if order == 1 { kp.tau * s_sq } else { 1.0 };
        2.0 * weight * exp_floor(e)
    };
    let rule = GaussLegendre::standard();
    let pref = kp.s_star / (2.0 * PI * s2);
    let mut panels = 1usize;
    let mut prev = rule.integrate_panels(integrand, 0.0, 0.5 * PI, panels);
    while panels < 1 << 16 {
        panels *= 2;
        let next = rule.integrate_panels(integrand, 0.0, 0.5 * PI, panels);
        if (next - prev).abs() <= 1e-11 * next.abs() || next == 0.0 && prev == 0.0 {
            return Ok(pref * next);
        }
        prev = next;
    }
    Err(VolcalError::OracleFailure(format!(
        "kernel oracle at (x={x}, y={y}, tau={}) did not settle after {panels} panels",
        kp.tau
    )))
}

/// K₀(0, 0; τ) = s*/(2σ₀²), independent of τ.
pub fn k0_at_origin(s_star: f64, sigma0: f64) -> f64 {
    s_star / (2.0 * sigma0 * sigma0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kp(tau: f64) -> KernelParams {
        KernelParams::new(1.0, 0.3, tau).unwrap()
    }

    #[test]
    fn values_at_origin() {
        let k = kp(0.25);
        assert!((kernel_k0(0.0, 0.0, &k) - 1.0 / (2.0 * 0.09)).abs() < 1e-13);
        assert!((k0_at_origin(1.0, 0.3) - 1.0 / 0.18).abs() < 1e-13);
        assert!((kernel_k1(0.0, 0.0, &k) - 0.25 / (4.0 * 0.09)).abs() < 1e-13);
        let o = kernel_quadrature_oracle(0.0, 0.0, &k, 0).unwrap();
        assert!((o * 0.18 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn k1_slope_in_time_at_origin() {
        let h = 1e-4;
        let fd = (kernel_k1(0.0, 0.0, &kp(0.5 + h)) - kernel_k1(0.0, 0.0, &kp(0.5 - h))) / (2.0 * h);
        assert!((fd - 1.0 / (4.0 * 0.09)).abs() < 1e-9);
    }

    #[test]
    fn k1_on_the_spot_line() {
        let k = kp(0.25);
        let x: f64 = 0.07;
        let ss = k.scale();
        let want = 0.5
            * ss
            * (-(0.25f64).sqrt() * x / (SQRT_2 * 0.3) * (-x * x / (2.0 * 0.25 * 0.09)).exp()
                + (x * x / 0.09 + 0.25) * upper_gauss_integral(x / (0.3 * (0.5f64).sqrt())));
        assert!((kernel_k1(x, 0.0, &k) - want).abs() < 1e-14);
    }

    #[test]
    fn matches_oracle_at_sample_point() {
        let k = kp(0.25);
        for order in 0..2 {
            let o = kernel_quadrature_oracle(0.05, -0.03, &k, order).unwrap();
            let c = if order == 0 {
                kernel_k0(0.05, -0.03, &k)
            } else {
                kernel_k1(0.05, -0.03, &k)
            };
            assert!((c / o - 1.0).abs() < 1e-8, "order {order}: {c} vs {o}");
        }
    }

    #[test]
    fn oracle_vanishes_with_time() {
        let k = kp(1e-8);
        let v = kernel_quadrature_oracle(0.1, 0.05, &k, 0).unwrap();
        assert!(v.abs() < 1e-300);
    }

    #[test]
    fn k0_depends_on_path_length_only() {
        let k = kp(0.5);
        let a = kernel_k0(0.1, 0.04, &k);
        let b = kernel_k0(-0.02, 0.04, &k);
        assert!((path_length(0.1, 0.04) - path_length(-0.02, 0.04)).abs() < 1e-15);
        assert!((a - b).abs() < 1e-15);
        assert!(kernel_k0(0.0, 3.0, &k) < kernel_k0(0.0, 1.0, &k));
        assert!(kernel_k0(0.0, 40.0, &k) >= 0.0);
    }

    #[test]
    fn second_x_derivatives_match_finite_differences() {
        let k = kp(0.25);
        let h = 1e-4;
        for &(x, y) in &[(0.05, -0.03), (0.02, 0.07), (-0.08, 0.01)] {
            let fd0 = (kernel_k0(x + h, y, &k) - 2.0 * kernel_k0(x, y, &k) + kernel_k0(x - h, y, &k)) / (h * h);
            let fd1 = (kernel_k1(x + h, y, &k) - 2.0 * kernel_k1(x, y, &k) + kernel_k1(x - h, y, &k)) / (h * h);
            assert!((fd0 / kernel_k0_xx(x, y, &k) - 1.0).abs() < 1e-5);
            assert!((fd1 / kernel_k1_xx(x, y, &k) - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn jumps_match_one_sided_slopes() {
        let k = kp(0.25);
        let y = 0.03;
        let h = 1e-6;
        let slope = |f: &dyn Fn(f64) -> f64, a: f64, b: f64| (f(b) - f(a)) / (b - a);
        for (order, want) in [(0, kernel_jumps(y, &k).0), (1, kernel_jumps(y, &k).1)] {
            let f = |x: f64| {
                if order == 0 {
                    kernel_k0(x, y, &k)
                } else {
                    kernel_k1(x, y, &k)
                }
            };
            let right = slope(&f, y + h, y + 2.0 * h);
            let left = slope(&f, y - 2.0 * h, y - h);
            assert!(((right - left) / want - 1.0).abs() < 1e-4, "order {order}");
        }
    }
}
