use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{forward_dupire_perturbed, ForwardConfig};
use crate::black_scholes::baseline_price;
use crate::error::{Result, VolcalError};
use crate::model::{from_log_vars, ModelParams, PerturbationPair, Quote, QuoteSlice};

/// Additive uniform price noise on [−half_width, half_width].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    pub half_width: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Quotes are produced at grid nodes with |y| ≤ strike_span.
    pub strike_span: f64,
    pub noise: Option<Noise>,
    pub forward: ForwardConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            strike_span: 0.2,
            noise: None,
            forward: ForwardConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub slices: [QuoteSlice; 2],
    /// Largest |U₀ − V₀| over quoted strikes for the unperturbed PDE solve.
    pub baseline_pde_error: f64,
}

/// Quotes at T₁ and T₂ under ½σ² = ½σ₀² + f₀ + τf₁.
///
/// Each price is V₀ + (U_f − U₀), where U_f and U₀ are Dupire solves with and
/// without the perturbation on the same grid, so the discretization error of
/// the baseline cancels.
pub fn synth_quotes(pair: &PerturbationPair, params: &ModelParams, cfg: &SynthConfig) -> Result<SynthOutput> {
    if !(cfg.strike_span > 0.0) {
        return Err(VolcalError::Config("strike_span must be positive".into()));
    }
    let taus = [params.tau1(), params.tau2()];
    let perturbed = forward_dupire_perturbed(pair, params, &taus, &cfg.forward)?;
    let base = forward_dupire_perturbed(&PerturbationPair::zeros(&pair.grid), params, &taus, &cfg.forward)?;
    let nodes = pair.grid.nodes();
    let quoted: Vec<usize> = (0..nodes.len())
        .filter(|&i| nodes[i].abs() <= cfg.strike_span + 1e-12)
        .collect();
    let mut rng = cfg.noise.map(|n| ChaCha8Rng::seed_from_u64(n.seed));
    let mut baseline_pde_error = 0.0f64;
    let mut slices = Vec::with_capacity(2);
    for (j, &tau) in taus.iter().enumerate() {
        let mut quotes = Vec::with_capacity(quoted.len());
        for &i in &quoted {
            let y = nodes[i];
            let v0 = baseline_price(params, y, tau);
            baseline_pde_error = baseline_pde_error.max((base[j][i] - v0).abs());
            let mut price = v0 + (perturbed[j][i] - base[j][i]);
            if let (Some(rng), Some(noise)) = (rng.as_mut(), cfg.noise) {
                price += rng.random_range(-noise.half_width..=noise.half_width);
            }
            if price > 0.0 {
                let (strike, _) = from_log_vars(params, y, tau);
                quotes.push(Quote {
                    strike,
                    price,
                    bid: None,
                    ask: None,
                });
            }
        }
        slices.push(QuoteSlice::new(tau + params.t_star, quotes)?);
    }
    let second = slices.pop().expect("two slices");
    let first = slices.pop().expect("two slices");
    Ok(SynthOutput {
        slices: [first, second],
        baseline_pde_error,
    })
}

/// Constant-σ₀ quotes at both expiries on `count` strikes spanning |y| ≤ span.
pub fn baseline_slices(params: &ModelParams, span: f64, count: usize) -> Result<[QuoteSlice; 2]> {
    let make = |tau: f64| {
        let quotes = (0..count)
            .map(|k| {
                let y = -span + 2.0 * span * k as f64 / (count - 1) as f64;
                Quote {
                    strike: params.s_star * y.exp(),
                    price: baseline_price(params, y, tau),
                    bid: None,
                    ask: None,
                }
            })
            .collect();
        QuoteSlice::new(tau + params.t_star, quotes)
    };
    Ok([make(params.tau1())?, make(params.tau2())?])
}
