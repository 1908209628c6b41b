//! Inversion of the approximate linearized problem, where the source is
//! S·θ^{−1/2}(f₀(y) + θf₁(y)) with no y-dependence in the time factor.
//!
//! Per frequency ξ (with Ξ = σ₀ξ/√2) the data satisfy
//! Ŵ_j = S(I₋(τ_j, Ξ)f̂₀ + I₊(τ_j, Ξ)f̂₁), a 2×2 system with determinant
//! d(ξ)/S. Two discretizations are provided: a zero-padded DFT (the problem on
//! the line) and a Dirichlet sine series on Ω.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Result, VolcalError};
use crate::model::{sup_norm, Grid, ModelParams, PerturbationPair};
use crate::quadrature::adaptive;
use crate::special::dawson;

/// Below this value of Ξ√τ the time integrals use their power series.
const SERIES_SWITCH: f64 = 1.0;

/// I₋(τ, Ξ) = ∫₀^τ θ^{−1/2} e^{Ξ²(θ−τ)} dθ = 2·D(Ξ√τ)/Ξ.
pub fn time_integral_minus(tau: f64, big_xi: f64) -> f64 {
    let x = big_xi.abs() * tau.sqrt();
    if x < SERIES_SWITCH {
        tau.sqrt() * confluent_series(x * x, 0.5)
    } else {
        2.0 * dawson(x) / big_xi.abs()
    }
}

/// I₊(τ, Ξ) = ∫₀^τ θ^{1/2} e^{Ξ²(θ−τ)} dθ = (√τ − I₋/2)/Ξ².
pub fn time_integral_plus(tau: f64, big_xi: f64) -> f64 {
    let x = big_xi.abs() * tau.sqrt();
    if x < SERIES_SWITCH {
        tau * tau.sqrt() * confluent_series(x * x, 1.5)
    } else {
        let xi2 = big_xi * big_xi;
        (tau.sqrt() - 0.5 * time_integral_minus(tau, big_xi)) / xi2
    }
}

// ∫₀¹ ρ^{a−1} e^{−s(1−ρ)} dρ = e^{−s} Σ s^k/(k!(k+a)); all terms positive.
fn confluent_series(s: f64, a: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0 / a;
    for k in 1..200 {
        term *= s / k as f64;
        let add = term / (k as f64 + a);
        sum += add;
        if add < 1e-17 * sum {
            break;
        }
    }
    (-s).exp() * sum
}

/// Ξ = σ₀ξ/√2.
pub fn big_xi(sigma0: f64, xi: f64) -> f64 {
    sigma0 * xi.abs() / std::f64::consts::SQRT_2
}

/// d(ξ) = S(I₋(τ₁)I₊(τ₂) − I₊(τ₁)I₋(τ₂)).
pub fn determinant_d(xi: f64, params: &ModelParams) -> f64 {
    let x = big_xi(params.sigma0, xi);
    let (t1, t2) = (params.tau1(), params.tau2());
    params.source_scale()
        * (time_integral_minus(t1, x) * time_integral_plus(t2, x)
            - time_integral_plus(t1, x) * time_integral_minus(t2, x))
}

/// d(ξ) = S√(τ₁τ₂)/Ξ²·(J(Ξ²τ₁) − J(Ξ²τ₂)) with J(a) = ∫₀¹ρ^{−1/2}e^{a(ρ−1)}dρ,
/// each J by adaptive quadrature after ρ = u². Only for ξ ≠ 0.
pub fn determinant_substitution(xi: f64, params: &ModelParams) -> Result<f64> {
    let x = big_xi(params.sigma0, xi);
    if x == 0.0 {
        return Err(VolcalError::domain(
            "substitution form of the determinant needs a nonzero frequency",
        ));
    }
    let j = |a: f64| adaptive(|u: f64| 2.0 * (-a * (1.0 - u * u)).exp(), 0.0, 1.0, 1e-14, 0.0);
    let (t1, t2) = (params.tau1(), params.tau2());
    let x2 = x * x;
    Ok(params.source_scale() * (t1 * t2).sqrt() / x2 * (j(x2 * t1)? - j(x2 * t2)?))
}

/// ∞-norm of the per-frequency inverse map (Ŵ₁, Ŵ₂) ↦ (f̂₀, f̂₁).
pub fn amplification(xi: f64, params: &ModelParams) -> f64 {
    let x = big_xi(params.sigma0, xi);
    let (t1, t2) = (params.tau1(), params.tau2());
    let (m1, m2) = (time_integral_minus(t1, x), time_integral_minus(t2, x));
    let (p1, p2) = (time_integral_plus(t1, x), time_integral_plus(t2, x));
    let d = determinant_d(xi, params);
    ((p2.abs() + p1.abs()) / d).max((m2.abs() + m1.abs()) / d)
}

/// Smallest C with C⁻¹(1+ξ²)⁻² ≤ d(ξ) ≤ C(1+ξ²)⁻² over the given frequencies.
pub fn sandwich_constant(params: &ModelParams, xis: &[f64]) -> f64 {
    xis.iter()
        .map(|&xi| {
            let q = determinant_d(xi, params) * (1.0 + xi * xi).powi(2);
            q.max(1.0 / q)
        })
        .fold(1.0, f64::max)
}

/// Per-frequency coefficients of the 2×2 system at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeCoefficients {
    pub xi: f64,
    pub big_xi: f64,
    pub minus: [f64; 2],
    pub plus: [f64; 2],
    pub det: f64,
}

impl ModeCoefficients {
    pub fn new(xi: f64, params: &ModelParams) -> Self {
        let x = big_xi(params.sigma0, xi);
        let (t1, t2) = (params.tau1(), params.tau2());
        let minus = [time_integral_minus(t1, x), time_integral_minus(t2, x)];
        let plus = [time_integral_plus(t1, x), time_integral_plus(t2, x)];
        let det = params.source_scale() * (minus[0] * plus[1] - plus[0] * minus[1]);
        ModeCoefficients {
            xi,
            big_xi: x,
            minus,
            plus,
            det,
        }
    }

    /// (f̂₀, f̂₁) from (Ŵ₁, Ŵ₂).
    fn solve<T>(&self, w1: T, w2: T) -> (T, T)
    where
        T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Sub<Output = T>,
    {
        let inv = 1.0 / self.det;
        (
            (w1 * self.plus[1] - w2 * self.plus[0]) * inv,
            (w2 * self.minus[0] - w1 * self.minus[1]) * inv,
        )
    }
}

/// Cached frequencies and time integrals for one grid.
#[derive(Debug, Clone)]
pub struct SpectralWorkspace {
    modes: Vec<ModeCoefficients>,
    source_scale: f64,
}

impl SpectralWorkspace {
    /// Dirichlet sine modes n = 1..=count on Ω, ξ_n = πn/(2B).
    pub fn sine(params: &ModelParams, half_width: f64, count: usize) -> Self {
        let modes = (1..=count)
            .into_par_iter()
            .map(|n| ModeCoefficients::new(std::f64::consts::PI * n as f64 / (2.0 * half_width), params))
            .collect();
        SpectralWorkspace {
            modes,
            source_scale: params.source_scale(),
        }
    }

    /// DFT frequencies 2π·min(k, N−k)/(N·h) for k = 0..N.
    pub fn fourier(params: &ModelParams, len: usize, step: f64) -> Self {
        let modes = (0..len)
            .into_par_iter()
            .map(|k| {
                let m = k.min(len - k) as f64;
                ModeCoefficients::new(2.0 * std::f64::consts::PI * m / (len as f64 * step), params)
            })
            .collect();
        SpectralWorkspace {
            modes,
            source_scale: params.source_scale(),
        }
    }

    pub fn modes(&self) -> &[ModeCoefficients] {
        &self.modes
    }

    pub fn min_determinant(&self) -> f64 {
        self.modes.iter().map(|m| m.det).fold(f64::INFINITY, f64::min)
    }
}

/// Result of a spectral inversion.
#[derive(Debug, Clone)]
pub struct SpectralSolution {
    pub pair: PerturbationPair,
    /// Largest residual of I₋(τ_j)f̂₀ + I₊(τ_j)f̂₁ = Ŵ_j/S over frequencies,
    /// relative to the largest |Ŵ_j|/S.
    pub system_residual: f64,
    /// Largest discarded imaginary part relative to ‖f‖∞ (zero for sine series).
    pub imaginary_residue: f64,
    pub modes: usize,
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    if inverse {
        planner.plan_fft_inverse(len)
    } else {
        planner.plan_fft_forward(len)
    }
}

/// DST-I: F_n = Σ_{k=1}^{M} x_k sin(πnk/(M+1)) for n = 1..=M.
pub fn dst1(x: &[f64]) -> Vec<f64> {
    let m = x.len();
    if m == 0 {
        return Vec::new();
    }
    let len = 2 * (m + 1);
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for (k, &v) in x.iter().enumerate() {
        buf[k + 1] = Complex64::new(v, 0.0);
        buf[len - 1 - k] = Complex64::new(-v, 0.0);
    }
    plan(len, false).process(&mut buf);
    (1..=m).map(|n| -0.5 * buf[n].im).collect()
}

/// Inverse of [`dst1`].
pub fn idst1(coeffs: &[f64]) -> Vec<f64> {
    let m = coeffs.len();
    let scale = 2.0 / (m + 1) as f64;
    dst1(coeffs).into_iter().map(|v| v * scale).collect()
}

fn check_len(grid: &Grid, v: &[f64]) -> Result<()> {
    if v.len() != grid.len() {
        return Err(VolcalError::GridMismatch {
            expected: grid.len(),
            got: v.len(),
        });
    }
    Ok(())
}

/// Sine coefficients b_n (n = 1..=M) of grid samples with zero end values:
/// v(y_k) = (2/(M+1))Σ b_n sin(πn(y_k + B)/(2B)).
pub fn sine_coefficients(values: &[f64]) -> Vec<f64> {
    dst1(&values[1..values.len() - 1])
}

/// Grid samples from sine coefficients (end values zero).
pub fn sine_synthesis(coeffs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(coeffs.len() + 2);
    out.push(0.0);
    out.extend(idst1(coeffs));
    out.push(0.0);
    out
}

/// Inverts sine-series data with `modes` modes retained.
pub fn invert_sine_series(
    w1: &[f64],
    w2: &[f64],
    params: &ModelParams,
    grid: &Grid,
    modes: usize,
) -> Result<SpectralSolution> {
    check_len(grid, w1)?;
    check_len(grid, w2)?;
    for (name, w) in [("W1", w1), ("W2", w2)] {
        let scale = sup_norm(w).max(f64::MIN_POSITIVE);
        let edge = w[0].abs().max(w[w.len() - 1].abs());
        if edge > 1e-8 * scale {
            return Err(VolcalError::Precondition(format!(
                "{name} must vanish at the domain ends (|{name}(±B)| = {edge:e}, sup {scale:e})"
            )));
        }
    }
    let interior = grid.len() - 2;
    let modes = modes.min(interior);
    let ws = SpectralWorkspace::sine(params, grid.half_width(), modes);
    let c1 = sine_coefficients(w1);
    let c2 = sine_coefficients(w2);
    let mut f0c = vec![0.0; interior];
    let mut f1c = vec![0.0; interior];
    let data_scale = c1.iter().chain(&c2).fold(0.0f64, |m, v| m.max(v.abs())) / ws.source_scale;
    let mut residual = 0.0f64;
    for (n, mode) in ws.modes().iter().enumerate() {
        let (a, b) = mode.solve(c1[n], c2[n]);
        f0c[n] = a;
        f1c[n] = b;
        for j in 0..2 {
            let w = if j == 0 { c1[n] } else { c2[n] };
            let r = mode.minus[j] * a + mode.plus[j] * b - w / ws.source_scale;
            residual = residual.max(r.abs());
        }
    }
    let pair = PerturbationPair::new(grid, sine_synthesis(&f0c), sine_synthesis(&f1c))?;
    Ok(SpectralSolution {
        pair,
        system_residual: if data_scale > 0.0 { residual / data_scale } else { 0.0 },
        imaginary_residue: 0.0,
        modes,
    })
}

/// Padded transform length: a power of two ≥ 512 holding 2(n − 1) samples.
pub fn fourier_length(nodes: usize) -> usize {
    (2 * (nodes - 1)).next_power_of_two().max(512)
}

/// Inverts data on Ω by a zero-padded DFT and per-frequency 2×2 solves.
pub fn invert_fourier(w1: &[f64], w2: &[f64], params: &ModelParams, grid: &Grid) -> Result<SpectralSolution> {
    check_len(grid, w1)?;
    check_len(grid, w2)?;
    let n = grid.len();
    let len = fourier_length(n);
    let ws = SpectralWorkspace::fourier(params, len, grid.step());
    if ws.min_determinant() < 1e-300 {
        return Err(VolcalError::Precondition(
            "degenerate frequency: determinant vanishes".into(),
        ));
    }
    let forward = plan(len, false);
    let transform = |w: &[f64]| {
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        for (b, &v) in buf.iter_mut().zip(w) {
            *b = Complex64::new(v, 0.0);
        }
        forward.process(&mut buf);
        buf
    };
    let h1 = transform(w1);
    let h2 = transform(w2);
    let mut g0 = vec![Complex64::new(0.0, 0.0); len];
    let mut g1 = vec![Complex64::new(0.0, 0.0); len];
    let s = ws.source_scale;
    let data_scale = h1.iter().chain(&h2).fold(0.0f64, |m, v| m.max(v.norm())) / s;
    let mut residual = 0.0f64;
    for (k, mode) in ws.modes().iter().enumerate() {
        let (a, b) = mode.solve(h1[k], h2[k]);
        g0[k] = a;
        g1[k] = b;
        for (j, h) in [&h1, &h2].into_iter().enumerate() {
            let r = a * mode.minus[j] + b * mode.plus[j] - h[k] / s;
            residual = residual.max(r.norm());
        }
    }
    let inverse = plan(len, true);
    let back = |buf: &mut Vec<Complex64>| {
        inverse.process(buf);
        let scale = 1.0 / len as f64;
        buf.truncate(n);
        buf.iter()
            .map(|c| (c.re * scale, c.im * scale))
            .unzip::<f64, f64, Vec<f64>, Vec<f64>>()
    };
    let (f0, im0) = back(&mut g0);
    let (f1, im1) = back(&mut g1);
    let fscale = sup_norm(&f0).max(sup_norm(&f1)).max(f64::MIN_POSITIVE);
    let imaginary_residue = sup_norm(&im0).max(sup_norm(&im1)) / fscale;
    Ok(SpectralSolution {
        pair: PerturbationPair::new(grid, f0, f1)?,
        system_residual: if data_scale > 0.0 { residual / data_scale } else { 0.0 },
        imaginary_residue,
        modes: len,
    })
}
