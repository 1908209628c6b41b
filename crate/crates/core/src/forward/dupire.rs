use super::{solve_tridiagonal, ForwardConfig};
use crate::black_scholes::baseline_price;
use crate::error::{Result, VolcalError};
use crate::model::{Grid, ModelParams, PerturbationPair};

/// Call prices U(y, τ) at each requested time (increasing) from
/// ∂U/∂τ = a·∂²U/∂y² − (a + μ)∂U/∂y − (r − μ)U, U(y, 0) = s*(1 − e^y)⁺,
/// where a(i, τ) is the half local variance at node i.
///
/// Crank–Nicolson after `rannacher_steps` fully implicit half steps; the end
/// values follow the constant-σ₀ price.
pub fn forward_dupire_slices<F>(
    half_var: F,
    params: &ModelParams,
    grid: &Grid,
    taus: &[f64],
    cfg: &ForwardConfig,
) -> Result<Vec<Vec<f64>>>
where
    F: Fn(usize, f64) -> f64,
{
    cfg.validate()?;
    if taus.iter().any(|&t| !(t >= 0.0)) || taus.windows(2).any(|w| w[1] < w[0]) {
        return Err(VolcalError::domain("output times must be non-negative and increasing"));
    }
    let nodes = grid.nodes();
    let n = nodes.len();
    let dy = grid.step();
    let mut u: Vec<f64> = nodes
        .iter()
        .map(|&y| params.s_star * (1.0 - y.exp()).max(0.0))
        .collect();
    let mut out = Vec::with_capacity(taus.len());
    let first = taus.iter().copied().find(|&t| t > 0.0);
    let Some(first) = first else {
        return Ok(taus.iter().map(|_| u.clone()).collect());
    };
    let base_dt = first / cfg.time_steps as f64;
    let mut t = 0.0;
    let mut started = false;

    let coeffs = |time: f64| -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let mut lo = vec![0.0; n];
        let mut di = vec![0.0; n];
        let mut up = vec![0.0; n];
        for i in 0..n {
            let a = half_var(i, time);
            if !(a > 0.0) || !a.is_finite() {
                return Err(VolcalError::domain(format!(
                    "half local variance must be positive, got {a} at y={} tau={time}",
                    nodes[i]
                )));
            }
            let diff = a / (dy * dy);
            let conv = (a + params.mu) / (2.0 * dy);
            lo[i] = diff + conv;
            di[i] = -2.0 * diff - (params.r - params.mu);
            up[i] = diff - conv;
        }
        Ok((lo, di, up))
    };

    let step = |u: &mut Vec<f64>, t0: f64, h: f64, theta: f64| -> Result<()> {
        let t1 = t0 + h;
        let (lo0, di0, up0) = coeffs(t0)?;
        let (lo1, di1, up1) = coeffs(t1)?;
        let m = n - 2;
        let mut rhs = vec![0.0; m];
        for i in 1..n - 1 {
            let lu = lo0[i] * u[i - 1] + di0[i] * u[i] + up0[i] * u[i + 1];
            rhs[i - 1] = u[i] + (1.0 - theta) * h * lu;
        }
        let left = baseline_price(params, nodes[0], t1);
        let right = baseline_price(params, nodes[n - 1], t1);
        let lower: Vec<f64> = (1..n - 1).map(|i| -theta * h * lo1[i]).collect();
        let diag: Vec<f64> = (1..n - 1).map(|i| 1.0 - theta * h * di1[i]).collect();
        let upper: Vec<f64> = (1..n - 1).map(|i| -theta * h * up1[i]).collect();
        rhs[0] += theta * h * lo1[1] * left;
        rhs[m - 1] += theta * h * up1[n - 2] * right;
        solve_tridiagonal(&lower, &diag, &upper, &mut rhs);
        u[0] = left;
        u[n - 1] = right;
        u[1..n - 1].copy_from_slice(&rhs);
        if u.iter().any(|v| !v.is_finite()) {
            return Err(VolcalError::Config(format!(
                "Dupire solver produced non-finite values at tau={t1}"
            )));
        }
        Ok(())
    };

    for &target in taus {
        if target > t {
            let span = target - t;
            let mut count = ((span / base_dt) - 1e-9).ceil().max(1.0) as usize;
            let mut h = span / count as f64;
            if !started {
                let half = cfg.rannacher_steps;
                for _ in 0..half {
                    step(&mut u, t, 0.5 * h, 1.0)?;
                    t += 0.5 * h;
                }
                count -= (half / 2).min(count);
                let rest = target - t;
                h = if count > 0 { rest / count as f64 } else { 0.0 };
                started = true;
            }
            for _ in 0..count {
                step(&mut u, t, h, 0.5)?;
                t += h;
            }
            t = target;
        }
        out.push(u.clone());
    }
    Ok(out)
}

/// Single-time version of [`forward_dupire_slices`].
pub fn forward_dupire<F>(
    half_var: F,
    params: &ModelParams,
    grid: &Grid,
    tau_end: f64,
    cfg: &ForwardConfig,
) -> Result<Vec<f64>>
where
    F: Fn(usize, f64) -> f64,
{
    Ok(forward_dupire_slices(half_var, params, grid, &[tau_end], cfg)?.remove(0))
}

/// Prices under ½σ² = ½σ₀² + f₀(y) + τf₁(y) with (f₀, f₁) sampled on the grid.
pub fn forward_dupire_perturbed(
    pair: &PerturbationPair,
    params: &ModelParams,
    taus: &[f64],
    cfg: &ForwardConfig,
) -> Result<Vec<Vec<f64>>> {
    let base = 0.5 * params.sigma0 * params.sigma0;
    forward_dupire_slices(|i, t| base + pair.f0[i] + t * pair.f1[i], params, &pair.grid, taus, cfg)
}
