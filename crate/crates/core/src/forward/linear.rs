use nalgebra::DMatrix;
use rayon::prelude::*;

use super::ForwardConfig;
use crate::error::Result;
use crate::kernels::{kernel_jumps, kernel_k0, kernel_k0_xx, kernel_k1, kernel_k1_xx, KernelParams};
use crate::model::{Grid, ModelParams, Perturbation, PerturbationPair};
use crate::quadrature::{adaptive_piecewise, product_weights, GaussLegendre};

/// Sub-interval ends for y-integration at x: the support ends, the kinks of
/// the kernels at y = 0 and y = x, and the perturbation's own breakpoints.
fn breaks<P: Perturbation + ?Sized>(p: &P, x: f64) -> Vec<f64> {
    let b = p.support();
    let mut pts = vec![-b, 0.0, b];
    if x.abs() < b {
        pts.push(x);
    }
    pts.extend(p.breakpoints().into_iter().filter(|y| y.abs() < b));
    pts.sort_by(|a, c| a.total_cmp(c));
    pts.dedup_by(|a, c| (*a - *c).abs() < 1e-15);
    pts
}

/// Rough size of |f₀| + τ|f₁| used to set an absolute quadrature floor.
fn magnitude<P: Perturbation + ?Sized>(p: &P, tau: f64) -> f64 {
    let b = p.support();
    (0..=400)
        .map(|i| -b + 2.0 * b * i as f64 / 400.0)
        .map(|y| p.f0(y).abs() + tau * p.f1(y).abs())
        .fold(0.0, f64::max)
}

fn integrate_rows<P, F>(
    p: &P,
    params: &ModelParams,
    tau: f64,
    xs: &[f64],
    cfg: &ForwardConfig,
    row: F,
) -> Result<Vec<f64>>
where
    P: Perturbation + ?Sized,
    F: Fn(&KernelParams, f64, f64) -> f64 + Sync,
{
    let kp = KernelParams::from_model(params, tau)?;
    let scale = magnitude(p, tau) * params.s_star / (params.sigma0 * params.sigma0) * p.support();
    let abs_tol = cfg.quad_tol * 1e-3 * scale;
    xs.par_iter()
        .map(|&x| {
            if scale == 0.0 {
                return Ok(0.0);
            }
            adaptive_piecewise(|y| row(&kp, x, y), &breaks(p, x), cfg.quad_tol, abs_tol)
        })
        .collect()
}

/// W(x, τ) = ∫_ω K₀f₀ + K₁f₁ dy at each x in `xs`.
pub fn forward_linear_at<P: Perturbation + ?Sized>(
    p: &P,
    params: &ModelParams,
    tau: f64,
    xs: &[f64],
    cfg: &ForwardConfig,
) -> Result<Vec<f64>> {
    integrate_rows(p, params, tau, xs, cfg, |kp, x, y| {
        let (a, b) = (p.f0(y), p.f1(y));
        let mut v = 0.0;
        if a != 0.0 {
            v += kernel_k0(x, y, kp) * a;
        }
        if b != 0.0 {
            v += kernel_k1(x, y, kp) * b;
        }
        v
    })
}

/// W(·, τ) at every node of `grid`.
pub fn forward_linear<P: Perturbation + ?Sized>(
    p: &P,
    params: &ModelParams,
    tau: f64,
    grid: &Grid,
    cfg: &ForwardConfig,
) -> Result<Vec<f64>> {
    forward_linear_at(p, params, tau, &grid.nodes(), cfg)
}

/// ∂²W/∂x² at each x, from the kernels' x-derivatives plus the local terms
/// produced by the slope jumps at y = x.
pub fn forward_linear_xx<P: Perturbation + ?Sized>(
    p: &P,
    params: &ModelParams,
    tau: f64,
    xs: &[f64],
    cfg: &ForwardConfig,
) -> Result<Vec<f64>> {
    let kp = KernelParams::from_model(params, tau)?;
    let regular = integrate_rows(p, params, tau, xs, cfg, |kp, x, y| {
        kernel_k0_xx(x, y, kp) * p.f0(y) + kernel_k1_xx(x, y, kp) * p.f1(y)
    })?;
    let b = p.support();
    Ok(xs
        .iter()
        .zip(regular)
        .map(|(&x, r)| {
            if x.abs() >= b {
                return r;
            }
            let (c0, c1) = kernel_jumps(x, &kp);
            r + c0 * p.f0(x) + c1 * p.f1(x)
        })
        .collect())
}

/// Quadrature matrices mapping sampled (f₀, f₁) on the ω-nodes of a grid to
/// W at every node, by product integration against local cubic interpolants.
#[derive(Debug, Clone)]
pub struct LinearForwardMatrix {
    pub k0: DMatrix<f64>,
    pub k1: DMatrix<f64>,
}

impl LinearForwardMatrix {
    pub fn new(params: &ModelParams, tau: f64, grid: &Grid) -> Result<Self> {
        let kp = KernelParams::from_model(params, tau)?;
        let m = grid.omega_len();
        let b = grid.b();
        let rule = GaussLegendre::new(8);
        let xs = grid.nodes();
        let rows: Vec<(Vec<f64>, Vec<f64>)> = xs
            .par_iter()
            .map(|&x| {
                (
                    product_weights(-b, grid.step(), m, |y| kernel_k0(x, y, &kp), &rule),
                    product_weights(-b, grid.step(), m, |y| kernel_k1(x, y, &kp), &rule),
                )
            })
            .collect();
        let n = xs.len();
        let k0 = DMatrix::from_fn(n, m, |i, l| rows[i].0[l]);
        let k1 = DMatrix::from_fn(n, m, |i, l| rows[i].1[l]);
        Ok(LinearForwardMatrix { k0, k1 })
    }

    pub fn apply(&self, pair: &PerturbationPair) -> Vec<f64> {
        let f0 = nalgebra::DVector::from_vec(pair.omega_f0());
        let f1 = nalgebra::DVector::from_vec(pair.omega_f1());
        (&self.k0 * f0 + &self.k1 * f1).iter().copied().collect()
    }
}
