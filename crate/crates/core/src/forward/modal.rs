use crate::error::Result;
use crate::model::{ModelParams, PerturbationPair};
use crate::spectral::{sine_coefficients, sine_synthesis, time_integral_minus, time_integral_plus, SpectralWorkspace};

/// Solution of the approximate problem on Ω with zero Dirichlet ends, exact in
/// time mode by mode: ŵ_n(τ) = S(I₋(τ, Ξ_n)f̂₀_n + I₊(τ, Ξ_n)f̂₁_n), keeping
/// the first `modes` sine modes.
pub fn forward_modal(pair: &PerturbationPair, params: &ModelParams, tau: f64, modes: usize) -> Result<Vec<f64>> {
    let grid = &pair.grid;
    let c0 = sine_coefficients(&pair.f0);
    let c1 = sine_coefficients(&pair.f1);
    let interior = c0.len();
    let keep = modes.min(interior);
    let ws = SpectralWorkspace::sine(params, grid.half_width(), keep);
    let s = params.source_scale();
    let mut out = vec![0.0; interior];
    for (n, mode) in ws.modes().iter().enumerate() {
        let x = mode.big_xi;
        out[n] = s * (time_integral_minus(tau, x) * c0[n] + time_integral_plus(tau, x) * c1[n]);
    }
    Ok(sine_synthesis(&out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Grid;

    #[test]
    fn single_mode_is_scaled() {
        let p = ModelParams::new(1.0, 0.0, 0.0, 0.0, 0.3, 0.25, 0.5).unwrap();
        let g = Grid::with_count(0.1, 1.0, 129).unwrap();
        let bw = g.half_width();
        let n = 5.0;
        let shape: Vec<f64> = g
            .nodes()
            .iter()
            .map(|y| (std::f64::consts::PI * n * (y + bw) / (2.0 * bw)).sin() / bw.sqrt())
            .collect();
        let pair = PerturbationPair::new(&g, shape.clone(), vec![0.0; g.len()]).unwrap();
        let w = forward_modal(&pair, &p, 0.25, 64).unwrap();
        let xi = p.sigma0 * std::f64::consts::PI * n / (2.0 * std::f64::consts::SQRT_2 * bw);
        let factor = p.source_scale() * time_integral_minus(0.25, xi);
        for (a, b) in w.iter().zip(&shape) {
            assert!((a - factor * b).abs() < 1e-13);
        }
        let zero = forward_modal(&PerturbationPair::zeros(&g), &p, 0.25, 64).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
    }
}
