//! End-to-end calibration: quotes → σ₀ → smoothed W_j → (f₀, f₁).

use serde::{Deserialize, Serialize};

use crate::error::{Result, VolcalError};
use crate::fredholm::{check_uniqueness, solve_direct, solve_neumann, A2Kernel, FredholmSystem, UniquenessReport};
use crate::model::{sup_norm, Grid, ModelParams, PerturbationPair, AMPLITUDE_WARNING};
use crate::pipeline::{
    extend_data, implied_sigma0, second_derivative, smooth_to_c2, DataSlice, MarketParams, QuoteSet, Smoothing,
};
use crate::spectral::{invert_fourier, invert_sine_series};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Fredholm,
    Spectral,
    Sine,
}

impl std::str::FromStr for Method {
    type Err = VolcalError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fredholm" => Ok(Method::Fredholm),
            "spectral" => Ok(Method::Spectral),
            "sine" => Ok(Method::Sine),
            _ => Err(VolcalError::Config(format!(
                "unknown method {s:?} (fredholm, spectral, sine)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub method: Method,
    pub smoothing: Smoothing,
    /// Half-width of ω in log-moneyness.
    pub b: f64,
    /// Half-width of Ω; the default rule when absent.
    pub half_width: Option<f64>,
    /// Grid intervals on [0, b].
    pub per_b: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Solve even when the uniqueness condition fails.
    pub force: bool,
    /// Overrides the implied σ₀.
    pub sigma0: Option<f64>,
    pub a2_kernel: A2Kernel,
    pub sine_modes: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            method: Method::Fredholm,
            smoothing: Smoothing::Gcv,
            b: 0.02,
            half_width: None,
            per_b: 40,
            tol: 1e-10,
            max_iter: 500,
            force: false,
            sigma0: None,
            a2_kernel: A2Kernel::Derived,
            sine_modes: 256,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(VolcalError::Config(format!("b must be positive, got {}", self.b)));
        }
        if let Some(h) = self.half_width {
            if !(h > self.b && h.is_finite()) {
                return Err(VolcalError::Config(format!("B = {h} must exceed b = {}", self.b)));
            }
        }
        if self.per_b < 2 {
            return Err(VolcalError::Config("need at least 2 grid intervals per b".into()));
        }
        if !(self.tol > 0.0) {
            return Err(VolcalError::Config(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(VolcalError::Config("max_iter must be positive".into()));
        }
        if let Some(s) = self.sigma0 {
            if !(s > 0.0 && s.is_finite()) {
                return Err(VolcalError::Config(format!("sigma0 must be positive, got {s}")));
            }
        }
        if let Smoothing::Fixed(l) = self.smoothing {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(VolcalError::Config(format!("lambda must be non-negative, got {l}")));
            }
        }
        if self.sine_modes < 4 {
            return Err(VolcalError::Config("need at least 4 sine modes".into()));
        }
        Ok(())
    }

    pub fn grid(&self, params: &ModelParams) -> Result<Grid> {
        let half = self
            .half_width
            .unwrap_or_else(|| Grid::default_half_width(self.b, params.sigma0, params.tau2()));
        Grid::new(self.b, half, self.per_b)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub method: Method,
    pub sigma0: f64,
    /// True when σ₀ was implied from the quotes.
    pub sigma0_implied: bool,
    pub params: ModelParams,
    pub b: f64,
    pub half_width: f64,
    pub grid_nodes: usize,
    pub lambda: [f64; 2],
    /// Largest |quote − smoothed price| per expiry.
    pub fit_residual: [f64; 2],
    pub uniqueness: UniquenessReport,
    pub forced: bool,
    pub iterations: Option<usize>,
    /// ∞-norm residual of the solved system.
    pub system_residual: f64,
    pub f0_sup: f64,
    pub f1_sup: f64,
    pub amplitude_ratio: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub params: ModelParams,
    pub grid: Grid,
    pub pair: PerturbationPair,
    pub data: [DataSlice; 2],
    pub report: CalibrationReport,
}

/// Full pipeline. `market` supplies s*, t*, r, μ, T₁, T₂.
pub fn calibrate(set: &QuoteSet, market: &MarketParams, cfg: &CalibrationConfig) -> Result<Calibration> {
    cfg.validate()?;
    for (slice, t) in set.slices.iter().zip([market.t1, market.t2]) {
        if slice.expiry != t {
            return Err(VolcalError::MissingExpiry {
                found: set.slices.iter().map(|s| s.expiry).collect(),
            });
        }
    }
    let (sigma0, implied) = match cfg.sigma0 {
        Some(s) => (s, false),
        None => (implied_sigma0(&set.slices[0], market, cfg.smoothing)?, true),
    };
    let params = market.with_sigma0(sigma0)?;
    let grid = cfg.grid(&params)?;
    let data = [
        smooth_to_c2(&set.slices[0], cfg.smoothing, cfg.b, &params)?,
        smooth_to_c2(&set.slices[1], cfg.smoothing, cfg.b, &params)?,
    ];
    let uniqueness = check_uniqueness(params.tau1(), params.tau2(), sigma0, &grid)?;
    let mut warnings = Vec::new();
    for (slice, d) in set.slices.iter().zip(&data) {
        let arb = slice.monotonicity_warnings();
        if !arb.is_empty() {
            warnings.push(format!(
                "expiry {}: call price increases with strike at {:?}",
                slice.expiry, arb
            ));
        }
        let (lo, hi) = d.curve.range();
        if lo > -cfg.b || hi < cfg.b {
            warnings.push(format!(
                "expiry {}: quotes cover [{lo:.4}, {hi:.4}], not all of ω; the spline is extrapolated linearly",
                slice.expiry
            ));
        }
    }
    let mut iterations = None;
    let mut forced = false;
    let (pair, system_residual) = match cfg.method {
        Method::Fredholm => {
            if !uniqueness.passes() {
                if !cfg.force {
                    return Err(VolcalError::ContractionViolated(Box::new(uniqueness)));
                }
                forced = true;
                warnings.push(format!(
                    "uniqueness condition fails ({}); solving anyway",
                    uniqueness.verdict()
                ));
            }
            let w1 = second_derivative(&data[0], &grid);
            let w2 = second_derivative(&data[1], &grid);
            let system = FredholmSystem::from_second_derivatives(&params, &grid, &w1, &w2, cfg.a2_kernel)?;
            let sol = if uniqueness.numeric_pass {
                let s = solve_neumann(&system, cfg.tol, cfg.max_iter)?;
                iterations = Some(s.iterations);
                s
            } else {
                solve_direct(&system)?
            };
            (sol.pair, sol.residual)
        }
        Method::Spectral | Method::Sine => {
            let w1 = extend_data(|y| data[0].w(y), &grid)?;
            let w2 = extend_data(|y| data[1].w(y), &grid)?;
            let sol = if cfg.method == Method::Spectral {
                invert_fourier(&w1, &w2, &params, &grid)?
            } else {
                invert_sine_series(&w1, &w2, &params, &grid, cfg.sine_modes)?
            };
            (sol.pair, sol.system_residual)
        }
    };
    let amplitude_ratio = pair.amplitude_ratio(&params);
    if amplitude_ratio > AMPLITUDE_WARNING {
        warnings.push(format!(
            "perturbation is {amplitude_ratio:.3} of sigma0^2/2; the linearization may be inaccurate"
        ));
    }
    let fit_residual = [0, 1].map(|j| {
        data[j]
            .sites
            .iter()
            .zip(&data[j].prices)
            .map(|(&y, &u)| (u - data[j].price(&params, y)).abs())
            .fold(0.0, f64::max)
    });
    let report = CalibrationReport {
        method: cfg.method,
        sigma0,
        sigma0_implied: implied,
        params,
        b: grid.b(),
        half_width: grid.half_width(),
        grid_nodes: grid.len(),
        lambda: [data[0].curve.lambda, data[1].curve.lambda],
        fit_residual,
        uniqueness,
        forced,
        iterations,
        system_residual,
        f0_sup: sup_norm(&pair.f0),
        f1_sup: sup_norm(&pair.f1),
        amplitude_ratio,
        warnings,
    };
    Ok(Calibration {
        params,
        grid,
        pair,
        data,
        report,
    })
}

impl Calibration {
    /// σ(s, t) = √(σ₀² + 2f₀*(s) + 2t·f₁*(s)) on the grid nodes at time t.
    pub fn local_vol_slice(&self, t: f64) -> Vec<(f64, f64)> {
        let s2 = self.params.sigma0 * self.params.sigma0;
        self.pair
            .to_original(&self.params)
            .into_iter()
            .map(|(s, f0, f1)| (s, (s2 + 2.0 * f0 + 2.0 * t * f1).max(0.0).sqrt()))
            .collect()
    }
}
