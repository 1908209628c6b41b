//! Forward maps from a perturbation (f₀, f₁) to data: the kernel integral
//! (exact linearized map), a Crank–Nicolson heat solver for the same problem,
//! the modal solution of the approximate problem, and the nonlinear Dupire
//! equation used to synthesize quotes.

mod dupire;
mod heat;
mod linear;
mod modal;
mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VolcalError};

pub use dupire::{forward_dupire, forward_dupire_perturbed, forward_dupire_slices};
pub use heat::{forward_heat_pde, HeatSource};
pub use linear::{forward_linear, forward_linear_at, forward_linear_xx, LinearForwardMatrix};
pub use modal::forward_modal;
pub use synth::{baseline_slices, synth_quotes, Noise, SynthConfig, SynthOutput};

/// Discretization settings shared by the forward solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForwardConfig {
    /// Relative tolerance of the adaptive y-quadrature in the kernel integral.
    pub quad_tol: f64,
    /// Time steps up to the first expiry.
    pub time_steps: usize,
    /// Fully implicit half steps at the start of the Dupire solve.
    pub rannacher_steps: usize,
    /// Sine modes for the modal solver.
    pub modes: usize,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        ForwardConfig {
            quad_tol: 1e-12,
            time_steps: 400,
            rannacher_steps: 4,
            modes: 256,
        }
    }
}

impl ForwardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.quad_tol > 0.0 && self.quad_tol < 1e-3) {
            return Err(VolcalError::Config(format!(
                "quad_tol must lie in (0, 1e-3), got {}",
                self.quad_tol
            )));
        }
        if self.time_steps < 50 {
            return Err(VolcalError::Config(format!(
                "need at least 50 time steps, got {}",
                self.time_steps
            )));
        }
        if self.rannacher_steps % 2 == 1 {
            return Err(VolcalError::Config(
                "rannacher_steps must be even (pairs of half steps)".into(),
            ));
        }
        if self.modes < 16 {
            return Err(VolcalError::Config(format!(
                "need at least 16 modes, got {}",
                self.modes
            )));
        }
        Ok(())
    }
}

/// Solves a tridiagonal system in place (Thomas algorithm). `lower[i]` couples
/// row i to i−1, `upper[i]` couples row i to i+1.
pub(crate) fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    rhs[0] /= beta;
    for i in 1..n {
        c[i] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * c[i];
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i + 1] * rhs[i + 1];
    }
}
