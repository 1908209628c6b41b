//! Second-kind Fredholm system on ω for the perturbation (f₀, f₁):
//!
//! f₀ + τ_j f₁ + A_j1 f₀ + A_j2 f₁ = w_j,  j = 1, 2,
//!
//! where w_j = −(√(πτ_j)σ₀³/(√2 s*))·e^{x²/(2τ_jσ₀²)}·W_j″(x). Eliminating
//! between the two equations gives a fixed-point form f = g − M f that is
//! solved by Neumann iteration when ‖M‖∞ < 1.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VolcalError};
use crate::forward::{forward_linear_xx, ForwardConfig};
use crate::kernels::{exp_floor, path_length};
use crate::model::{sup_norm, Grid, ModelParams, Perturbation, PerturbationPair};
use crate::quadrature::{adaptive_piecewise, product_weights, GaussLegendre};
use crate::special::scaled_upper_gauss;

/// Form of the f₁-kernel A_j2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum A2Kernel {
    /// −(|y|/(2σ₀²)·e^{−(g²−x²)/(2τσ₀²)} + √(τ/2)/σ₀·e^{x²/(2τσ₀²)}E(g/(σ₀√(2τ)))),
    /// obtained by differentiating K₁ twice in x.
    #[default]
    Derived,
    /// First coefficient |y|/σ₀² and the E-term limit taken at τ₁ for both
    /// expiries.
    FirstExpiryLimit,
    /// First coefficient |y|/(√(2τ)σ₀²).
    RootTau,
}

/// Time-dependent constants of one expiry.
#[derive(Debug, Clone, Copy)]
struct Slice {
    tau: f64,
    tau1: f64,
    sigma0: f64,
}

impl Slice {
    fn two_var(&self) -> f64 {
        2.0 * self.tau * self.sigma0 * self.sigma0
    }
}

/// Kernel of A_j1 at (x, y): −g·e^{−(g²−x²)/(2τσ₀²)}/(2τσ₀²).
fn kernel_a1(x: f64, y: f64, s: &Slice) -> f64 {
    let g = path_length(x, y);
    -g * exp_floor(-(g * g - x * x) / s.two_var()) / s.two_var()
}

/// Kernel of A_j2 at (x, y).
fn kernel_a2(x: f64, y: f64, s: &Slice, variant: A2Kernel) -> f64 {
    let g = path_length(x, y);
    let s2 = s.sigma0 * s.sigma0;
    let shift = exp_floor(-(g * g - x * x) / s.two_var());
    let first = match variant {
        A2Kernel::Derived => y.abs() / (2.0 * s2),
        A2Kernel::FirstExpiryLimit => y.abs() / s2,
        A2Kernel::RootTau => y.abs() / ((2.0 * s.tau).sqrt() * s2),
    };
    // e^{x²/(2τσ₀²)}·E(g/(σ₀√(2τ'))) = e^{x²/(2τσ₀²) − z²}·e^{z²}E(z)
    let tau_limit = if variant == A2Kernel::FirstExpiryLimit {
        s.tau1
    } else {
        s.tau
    };
    let z = g / (s.sigma0 * (2.0 * tau_limit).sqrt());
    let tail = exp_floor(x * x / s.two_var() - z * z) * scaled_upper_gauss(z);
    -(first * shift + (s.tau / 2.0).sqrt() / s.sigma0 * tail)
}

/// w_j(x) = −(√(πτ)σ₀³/(√2 s*))·e^{x²/(2τσ₀²)}·W″(x) at each x.
pub fn rhs_w(w_second: &[f64], xs: &[f64], tau: f64, params: &ModelParams) -> Vec<f64> {
    let s0 = params.sigma0;
    let pref = -(std::f64::consts::PI * tau).sqrt() * s0 * s0 * s0 / (std::f64::consts::SQRT_2 * params.s_star);
    xs.iter()
        .zip(w_second)
        .map(|(&x, &d2)| pref * (x * x / (2.0 * tau * s0 * s0)).exp() * d2)
        .collect()
}

/// Quadrature matrices of A_j1, A_j2 (j = 1, 2) on the ω-nodes of a grid and
/// the fixed-point operator M of the decoupled system.
#[derive(Debug, Clone)]
pub struct FredholmOperators {
    pub grid: Grid,
    pub taus: [f64; 2],
    pub variant: A2Kernel,
    /// `a[j][k]` is A_{j+1, k+1}.
    pub a: [[DMatrix<f64>; 2]; 2],
    /// Block matrix [[M₀₀, M₀₁], [M₁₀, M₁₁]] acting on (f₀, f₁).
    pub m: DMatrix<f64>,
}

impl FredholmOperators {
    pub fn new(tau1: f64, tau2: f64, sigma0: f64, grid: &Grid, variant: A2Kernel) -> Result<Self> {
        if !(tau1 > 0.0 && tau2 > tau1) {
            return Err(VolcalError::domain(format!("need 0 < tau1 < tau2, got {tau1}, {tau2}")));
        }
        if !(sigma0 > 0.0) {
            return Err(VolcalError::domain("sigma0 must be positive"));
        }
        let n = grid.omega_len();
        if n < 4 {
            return Err(VolcalError::domain("the data interval needs at least 4 grid nodes"));
        }
        let xs = grid.omega_nodes();
        let rule = GaussLegendre::new(8);
        let b = grid.b();
        let h = grid.step();
        let build = |tau: f64, k: usize| -> DMatrix<f64> {
            let s = Slice { tau, tau1, sigma0 };
            let rows: Vec<Vec<f64>> = xs
                .par_iter()
                .map(|&x| {
                    if k == 0 {
                        product_weights(-b, h, n, |y| kernel_a1(x, y, &s), &rule)
                    } else {
                        product_weights(-b, h, n, |y| kernel_a2(x, y, &s, variant), &rule)
                    }
                })
                .collect();
            DMatrix::from_fn(n, n, |i, l| rows[i][l])
        };
        let a = [[build(tau1, 0), build(tau1, 1)], [build(tau2, 0), build(tau2, 1)]];
        let dt = tau2 - tau1;
        let m00 = (&a[0][0] * tau2 - &a[1][0] * tau1) / dt;
        let m01 = (&a[0][1] * tau2 - &a[1][1] * tau1) / dt;
        let m10 = (&a[1][0] - &a[0][0]) / dt;
        let m11 = (&a[1][1] - &a[0][1]) / dt;
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&m00);
        m.view_mut((0, n), (n, n)).copy_from(&m01);
        m.view_mut((n, 0), (n, n)).copy_from(&m10);
        m.view_mut((n, n), (n, n)).copy_from(&m11);
        Ok(FredholmOperators {
            grid: grid.clone(),
            taus: [tau1, tau2],
            variant,
            a,
            m,
        })
    }

    pub fn from_params(params: &ModelParams, grid: &Grid, variant: A2Kernel) -> Result<Self> {
        FredholmOperators::new(params.tau1(), params.tau2(), params.sigma0, grid, variant)
    }

    /// ρ̂ = ‖M‖∞.
    pub fn contraction_factor(&self) -> f64 {
        inf_norm(&self.m)
    }

    /// A_jk f for sampled f on the ω-nodes (j, k ∈ {1, 2}).
    pub fn apply(&self, j: usize, k: usize, f: &[f64]) -> Vec<f64> {
        let v = &self.a[j - 1][k - 1] * DVector::from_column_slice(f);
        v.iter().copied().collect()
    }

    /// Residuals f₀ + τ_j f₁ + A_j1 f₀ + A_j2 f₁ − w_j on the ω-nodes.
    pub fn residual(&self, f0: &[f64], f1: &[f64], w: [&[f64]; 2]) -> [Vec<f64>; 2] {
        let r = |j: usize| {
            let a = self.apply(j + 1, 1, f0);
            let b = self.apply(j + 1, 2, f1);
            (0..f0.len())
                .map(|i| f0[i] + self.taus[j] * f1[i] + a[i] + b[i] - w[j][i])
                .collect()
        };
        [r(0), r(1)]
    }
}

/// Maximum absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Applies A_jk to a sampled function on the ω-nodes of `grid`.
pub fn apply_a(
    j: usize,
    k: usize,
    f: &[f64],
    grid: &Grid,
    params: &ModelParams,
    variant: A2Kernel,
) -> Result<Vec<f64>> {
    if !(1..=2).contains(&j) || !(1..=2).contains(&k) {
        return Err(VolcalError::domain(format!(
            "operator indices must be 1 or 2, got ({j}, {k})"
        )));
    }
    if f.len() != grid.omega_len() {
        return Err(VolcalError::GridMismatch {
            expected: grid.omega_len(),
            got: f.len(),
        });
    }
    let ops = FredholmOperators::from_params(params, grid, variant)?;
    Ok(ops.apply(j, k, f))
}

/// Analytic margins 1 − LHS of the two sufficient conditions for uniqueness,
/// evaluated as stated.
pub fn analytic_margins(tau1: f64, tau2: f64, sigma0: f64, b: f64) -> (f64, f64) {
    let s2 = sigma0 * sigma0;
    let root = (tau1 * tau2).sqrt();
    let lhs1 =
        (tau1 * tau1 + tau2 * tau2 + root * (tau1 + tau2)) / (tau1 * tau2 * (tau2 - tau1)) * 3.0 * b * b / (2.0 * s2);
    let lhs2 = (((tau1 / tau2).sqrt() + (tau2 / tau1).sqrt() + 2.0) * b * b / s2
        + 2.0 * (2.0 * std::f64::consts::PI).sqrt() * (tau1.sqrt() + tau2.sqrt()) * b / sigma0)
        / (2.0 * (tau2 - tau1));
    (1.0 - lhs1, 1.0 - lhs2)
}

/// Bound on ‖A_j1‖∞: 3b²/(2τσ₀²).
pub fn a1_bound(b: f64, tau: f64, sigma0: f64) -> f64 {
    3.0 * b * b / (2.0 * tau * sigma0 * sigma0)
}

/// Bound on ‖A_j2‖∞ for the derived kernel: b²/(2σ₀²) + √(πτ/2)·b/σ₀.
pub fn a2_bound(b: f64, tau: f64, sigma0: f64) -> f64 {
    b * b / (2.0 * sigma0 * sigma0) + (std::f64::consts::PI * tau / 2.0).sqrt() * b / sigma0
}

/// Uniqueness condition: analytic margins and the numeric contraction factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub tau1: f64,
    pub tau2: f64,
    pub sigma0: f64,
    pub b: f64,
    pub margin1: f64,
    pub margin2: f64,
    pub rho_hat: f64,
    pub analytic_pass: bool,
    pub numeric_pass: bool,
    /// Numeric ‖A_j1‖∞ and the bound 3b²/(2τ_jσ₀²), j = 1, 2.
    pub a1_norms: [f64; 2],
    pub a1_bounds: [f64; 2],
    /// Numeric ‖A_j2‖∞ and the bound b²/(2σ₀²) + √(πτ_j/2)b/σ₀.
    pub a2_norms: [f64; 2],
    pub a2_bounds: [f64; 2],
}

impl UniquenessReport {
    pub fn verdict(&self) -> &'static str {
        match (self.analytic_pass, self.numeric_pass) {
            (true, true) => "pass",
            (false, true) => "numeric-pass",
            (true, false) => "analytic-pass",
            (false, false) => "fail",
        }
    }

    pub fn passes(&self) -> bool {
        self.analytic_pass && self.numeric_pass
    }

    fn from_operators(ops: &FredholmOperators, sigma0: f64) -> Self {
        let [tau1, tau2] = ops.taus;
        let b = ops.grid.b();
        let (margin1, margin2) = analytic_margins(tau1, tau2, sigma0, b);
        let rho_hat = ops.contraction_factor();
        UniquenessReport {
            tau1,
            tau2,
            sigma0,
            b,
            margin1,
            margin2,
            rho_hat,
            analytic_pass: margin1 > 0.0 && margin2 > 0.0,
            numeric_pass: rho_hat < 1.0,
            a1_norms: [inf_norm(&ops.a[0][0]), inf_norm(&ops.a[1][0])],
            a1_bounds: [a1_bound(b, tau1, sigma0), a1_bound(b, tau2, sigma0)],
            a2_norms: [inf_norm(&ops.a[0][1]), inf_norm(&ops.a[1][1])],
            a2_bounds: [a2_bound(b, tau1, sigma0), a2_bound(b, tau2, sigma0)],
        }
    }
}

/// Evaluates both analytic margins and ρ̂ from matrices assembled on `grid`
/// (whose data half-width is b).
pub fn check_uniqueness(tau1: f64, tau2: f64, sigma0: f64, grid: &Grid) -> Result<UniquenessReport> {
    let ops = FredholmOperators::new(tau1, tau2, sigma0, grid, A2Kernel::Derived)?;
    Ok(UniquenessReport::from_operators(&ops, sigma0))
}

/// The assembled system with its right-hand sides.
#[derive(Debug, Clone)]
pub struct FredholmSystem {
    pub ops: FredholmOperators,
    pub sigma0: f64,
    pub w: [Vec<f64>; 2],
    /// (g₀, g₁) stacked.
    pub g: DVector<f64>,
}

impl FredholmSystem {
    pub fn new(ops: FredholmOperators, sigma0: f64, w1: Vec<f64>, w2: Vec<f64>) -> Result<Self> {
        let n = ops.grid.omega_len();
        for w in [&w1, &w2] {
            if w.len() != n {
                return Err(VolcalError::GridMismatch {
                    expected: n,
                    got: w.len(),
                });
            }
        }
        let [tau1, tau2] = ops.taus;
        let dt = tau2 - tau1;
        let g = DVector::from_fn(2 * n, |i, _| {
            if i < n {
                (tau2 * w1[i] - tau1 * w2[i]) / dt
            } else {
                (w2[i - n] - w1[i - n]) / dt
            }
        });
        Ok(FredholmSystem {
            ops,
            sigma0,
            w: [w1, w2],
            g,
        })
    }

    /// Builds w_j from W_j″ sampled on the ω-nodes.
    pub fn from_second_derivatives(
        params: &ModelParams,
        grid: &Grid,
        w1_xx: &[f64],
        w2_xx: &[f64],
        variant: A2Kernel,
    ) -> Result<Self> {
        let ops = FredholmOperators::from_params(params, grid, variant)?;
        let xs = grid.omega_nodes();
        let w1 = rhs_w(w1_xx, &xs, params.tau1(), params);
        let w2 = rhs_w(w2_xx, &xs, params.tau2(), params);
        FredholmSystem::new(ops, params.sigma0, w1, w2)
    }

    pub fn report(&self) -> UniquenessReport {
        UniquenessReport::from_operators(&self.ops, self.sigma0)
    }
}

/// Output of [`solve_neumann`].
#[derive(Debug, Clone)]
pub struct NeumannSolution {
    /// Solution on the full grid, zero outside ω.
    pub pair: PerturbationPair,
    pub iterations: usize,
    /// ‖residual‖∞ of the original (coupled) system.
    pub residual: f64,
    /// ‖x_{k+1} − x_k‖∞ / ‖x_k − x_{k−1}‖∞ for each iteration after the first.
    pub change_ratios: Vec<f64>,
    pub rho_hat: f64,
}

/// Neumann iteration x ← g − Mx from x = 0 until the ∞-norm change drops
/// below `tol`.
pub fn solve_neumann(system: &FredholmSystem, tol: f64, max_iter: usize) -> Result<NeumannSolution> {
    let report = system.report();
    if !report.numeric_pass {
        return Err(VolcalError::ContractionViolated(Box::new(report)));
    }
    let n = system.ops.grid.omega_len();
    let mut x = DVector::zeros(2 * n);
    let mut ratios = Vec::new();
    let mut last_change = f64::NAN;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let next = &system.g - &system.ops.m * &x;
        let change = (&next - &x).amax();
        x = next;
        if iterations > 1 && last_change > 0.0 {
            ratios.push(change / last_change);
        }
        last_change = change;
        if change < tol {
            break;
        }
        if iterations >= max_iter {
            let (f0, f1) = (x.rows(0, n), x.rows(n, n));
            let r = system
                .ops
                .residual(f0.as_slice(), f1.as_slice(), [&system.w[0], &system.w[1]]);
            return Err(VolcalError::NonConvergence {
                iterations,
                residual: sup_norm(&r[0]).max(sup_norm(&r[1])),
            });
        }
    }
    let f0: Vec<f64> = x.rows(0, n).iter().copied().collect();
    let f1: Vec<f64> = x.rows(n, n).iter().copied().collect();
    let r = system.ops.residual(&f0, &f1, [&system.w[0], &system.w[1]]);
    Ok(NeumannSolution {
        pair: embed(&system.ops.grid, &f0, &f1)?,
        iterations,
        residual: sup_norm(&r[0]).max(sup_norm(&r[1])),
        change_ratios: ratios,
        rho_hat: report.rho_hat,
    })
}

/// Dense LU solve of (I + M)f = g, for systems outside the contraction
/// regime.
pub fn solve_direct(system: &FredholmSystem) -> Result<NeumannSolution> {
    let n = system.ops.grid.omega_len();
    let lhs = DMatrix::identity(2 * n, 2 * n) + &system.ops.m;
    let x = lhs
        .lu()
        .solve(&system.g)
        .ok_or_else(|| VolcalError::Precondition("Fredholm system is singular".into()))?;
    let f0: Vec<f64> = x.rows(0, n).iter().copied().collect();
    let f1: Vec<f64> = x.rows(n, n).iter().copied().collect();
    let r = system.ops.residual(&f0, &f1, [&system.w[0], &system.w[1]]);
    Ok(NeumannSolution {
        pair: embed(&system.ops.grid, &f0, &f1)?,
        iterations: 0,
        residual: sup_norm(&r[0]).max(sup_norm(&r[1])),
        change_ratios: Vec::new(),
        rho_hat: system.ops.contraction_factor(),
    })
}

fn embed(grid: &Grid, f0: &[f64], f1: &[f64]) -> Result<PerturbationPair> {
    let mut full0 = vec![0.0; grid.len()];
    let mut full1 = vec![0.0; grid.len()];
    for (k, i) in grid.omega_range().enumerate() {
        full0[i] = f0[k];
        full1[i] = f1[k];
    }
    PerturbationPair::new(grid, full0, full1)
}

/// Residuals of the coupled system at the ω-nodes for a known perturbation,
/// with W_j″ from the analytically differentiated forward map and the A_jk
/// applied by adaptive quadrature.
pub fn consistency_residual<P: Perturbation + ?Sized>(
    p: &P,
    params: &ModelParams,
    grid: &Grid,
    variant: A2Kernel,
    cfg: &ForwardConfig,
) -> Result<[Vec<f64>; 2]> {
    let xs = grid.omega_nodes();
    let b = p.support();
    let mut out: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for (j, tau) in [params.tau1(), params.tau2()].into_iter().enumerate() {
        let w_xx = forward_linear_xx(p, params, tau, &xs, cfg)?;
        let w = rhs_w(&w_xx, &xs, tau, params);
        let s = Slice {
            tau,
            tau1: params.tau1(),
            sigma0: params.sigma0,
        };
        let scale = xs.iter().map(|&y| p.f0(y).abs() + p.f1(y).abs()).fold(0.0, f64::max);
        let residual: Result<Vec<f64>> = xs
            .par_iter()
            .zip(w.par_iter())
            .map(|(&x, &wj)| {
                let mut breaks = vec![-b, 0.0, b];
                if x.abs() < b {
                    breaks.push(x);
                }
                breaks.extend(p.breakpoints().into_iter().filter(|y| y.abs() < b));
                breaks.sort_by(|a, c| a.total_cmp(c));
                breaks.dedup();
                let af = adaptive_piecewise(
                    |y| kernel_a1(x, y, &s) * p.f0(y) + kernel_a2(x, y, &s, variant) * p.f1(y),
                    &breaks,
                    cfg.quad_tol,
                    cfg.quad_tol * 1e-3 * scale,
                )?;
                let local = if x.abs() < b { p.f0(x) + tau * p.f1(x) } else { 0.0 };
                Ok(local + af - wj)
            })
            .collect();
        out[j] = residual?;
    }
    Ok(out)
}
