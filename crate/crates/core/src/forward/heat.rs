use serde::{Deserialize, Serialize};

use super::{solve_tridiagonal, ForwardConfig};
use crate::error::{Result, VolcalError};
use crate::model::{sup_norm, ModelParams, PerturbationPair};
use crate::special::scaled_upper_gauss;

/// Time factor of the source term multiplying f₀ + τf₁.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeatSource {
    /// α(τ, y) = S·τ^{−1/2}·e^{−y²/(2σ₀²τ)}, the full linearized problem.
    Full,
    /// S·τ^{−1/2}, the approximate problem.
    Approximate,
}

/// ∫₀^t θ^{−1/2} e^{−a/θ} dθ = 2√t·e^{−u²}(1 − 2u·e^{u²}E(u)), u = √(a/t).
fn source_moment0(a: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if a == 0.0 {
        return 2.0 * t.sqrt();
    }
    let u = (a / t).sqrt();
    let e = (-u * u).exp();
    if e == 0.0 {
        return 0.0;
    }
    2.0 * t.sqrt() * e * (1.0 - 2.0 * u * scaled_upper_gauss(u))
}

/// ∫₀^t θ^{1/2} e^{−a/θ} dθ = (2/3)(t^{3/2}e^{−a/t} − a·moment0).
fn source_moment1(a: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if a == 0.0 {
        return 2.0 / 3.0 * t * t.sqrt();
    }
    let e = (-a / t).exp();
    if e == 0.0 {
        return 0.0;
    }
    (2.0 / 3.0) * (t * t.sqrt() * e - a * source_moment0(a, t))
}

/// Crank–Nicolson for ∂W/∂τ − ½σ₀²∂²W/∂y² = source·(f₀ + τf₁), W(·, 0) = 0,
/// zero Dirichlet values at ±B. The source is integrated exactly in time over
/// every step, which absorbs the τ^{−1/2} singularity at the start.
pub fn forward_heat_pde(
    f: &PerturbationPair,
    params: &ModelParams,
    tau_end: f64,
    source: HeatSource,
    cfg: &ForwardConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if !(tau_end >= 0.0) {
        return Err(VolcalError::domain("end time must be non-negative"));
    }
    let grid = &f.grid;
    let n = grid.len();
    let mut w = vec![0.0; n];
    if tau_end == 0.0 {
        return Ok(w);
    }
    let steps = cfg.time_steps;
    let dt = tau_end / steps as f64;
    let h = grid.step();
    let r = 0.5 * params.sigma0 * params.sigma0 * dt / (h * h);
    let s = params.source_scale();
    let nodes = grid.nodes();
    let decay: Vec<f64> = nodes
        .iter()
        .map(|y| match source {
            HeatSource::Full => y * y / (2.0 * params.sigma0 * params.sigma0),
            HeatSource::Approximate => 0.0,
        })
        .collect();
    let active: Vec<usize> = (0..n).filter(|&i| f.f0[i] != 0.0 || f.f1[i] != 0.0).collect();

    let m = n - 2;
    let lower = vec![-0.5 * r; m];
    let diag = vec![1.0 + r; m];
    let upper = vec![-0.5 * r; m];
    let mut prev0 = vec![0.0; n];
    let mut prev1 = vec![0.0; n];
    let mut rhs = vec![0.0; m];
    let mut peak = 0.0f64;
    for k in 1..=steps {
        let t = k as f64 * dt;
        for i in 1..n - 1 {
            rhs[i - 1] = w[i] + 0.5 * r * (w[i + 1] - 2.0 * w[i] + w[i - 1]);
        }
        for &i in &active {
            if i == 0 || i == n - 1 {
                continue;
            }
            let m0 = source_moment0(decay[i], t);
            let m1 = source_moment1(decay[i], t);
            rhs[i - 1] += s * ((m0 - prev0[i]) * f.f0[i] + (m1 - prev1[i]) * f.f1[i]);
            prev0[i] = m0;
            prev1[i] = m1;
        }
        solve_tridiagonal(&lower, &diag, &upper, &mut rhs);
        w[1..n - 1].copy_from_slice(&rhs);
        let norm = sup_norm(&w);
        if !norm.is_finite() || (peak > 0.0 && norm > 1e6 * peak) {
            return Err(VolcalError::Config(format!("heat solver became unstable at step {k}")));
        }
        peak = peak.max(norm);
    }
    Ok(w)
}
