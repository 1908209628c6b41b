//! Run configuration: one JSON file shared by every subcommand, with command
//! line flags layered on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use volcal::calibrate::{CalibrationConfig, Method};
use volcal::forward::{ForwardConfig, Noise};
use volcal::fredholm::A2Kernel;
use volcal::model::{Bump, Grid, ModelParams};
use volcal::pipeline::{MarketParams, Smoothing};
use volcal::{Result, VolcalError};

/// Grid on (−B, B) with `n` intervals on [0, b]. B defaults to
/// max(5b, b + 6σ₀√τ₂).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub b: f64,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    pub n: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            b: 0.02,
            half_width: None,
            n: 40,
        }
    }
}

/// Ground truth for `synth`: parametric bumps or a sampled table with
/// columns `y,f0,f1` (linear interpolation between rows).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationSpec {
    pub bumps: Vec<Bump>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub perturbation: PerturbationSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<Noise>,
    /// Quotes are emitted at grid nodes with |y| ≤ strike_span.
    pub strike_span: f64,
    pub forward: ForwardConfig,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            perturbation: PerturbationSpec::default(),
            noise: None,
            strike_span: 0.2,
            forward: ForwardConfig::default(),
        }
    }
}

/// `check` sweep over b (linearly spaced, inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub b_min: f64,
    pub b_max: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelTableSpec {
    pub taus: Vec<f64>,
    /// Table covers [−extent, extent]² ...
    pub extent: f64,
    /// ... with this many points per axis.
    pub points: usize,
    /// Adds relative deviation from the time-quadrature oracle.
    pub oracle: bool,
}

impl Default for KernelTableSpec {
    fn default() -> Self {
        KernelTableSpec {
            taus: vec![0.25, 1.0],
            extent: 0.3,
            points: 21,
            oracle: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub market: Option<MarketParams>,
    /// Generating σ₀ for synth; fixed σ₀ (instead of implied) for calibrate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma0: Option<f64>,
    pub grid: GridSpec,
    pub method: Method,
    pub lambda: Smoothing,
    pub tol: f64,
    pub max_iter: usize,
    pub force: bool,
    pub a2_kernel: A2Kernel,
    pub sine_modes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quotes: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Times at which σ(s, t) slices are written; defaults to T₁, T₂.
    pub times: Vec<f64>,
    pub synth: SynthSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    pub kernels: KernelTableSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        let cal = CalibrationConfig::default();
        RunConfig {
            market: None,
            sigma0: None,
            grid: GridSpec::default(),
            method: cal.method,
            lambda: cal.smoothing,
            tol: cal.tol,
            max_iter: cal.max_iter,
            force: false,
            a2_kernel: cal.a2_kernel,
            sine_modes: cal.sine_modes,
            quotes: None,
            out: None,
            times: Vec::new(),
            synth: SynthSpec::default(),
            sweep: None,
            kernels: KernelTableSpec::default(),
        }
    }
}

/// Flag values that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub method: Option<Method>,
    pub lambda: Option<Smoothing>,
    pub b: Option<f64>,
    pub half_width: Option<f64>,
    pub grid_n: Option<usize>,
    pub tol: Option<f64>,
    pub force: bool,
    pub quotes: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Calibrate,
    Check,
    Kernels,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| VolcalError::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| VolcalError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(m) = o.method {
            self.method = m;
        }
        if let Some(l) = o.lambda {
            self.lambda = l;
        }
        if let Some(b) = o.b {
            self.grid.b = b;
        }
        if o.half_width.is_some() {
            self.grid.half_width = o.half_width;
        }
        if let Some(n) = o.grid_n {
            self.grid.n = n;
        }
        if let Some(t) = o.tol {
            self.tol = t;
        }
        self.force |= o.force;
        if o.quotes.is_some() {
            self.quotes = o.quotes.clone();
        }
        if o.out.is_some() {
            self.out = o.out.clone();
        }
    }

    pub fn calibration(&self) -> CalibrationConfig {
        CalibrationConfig {
            method: self.method,
            smoothing: self.lambda,
            b: self.grid.b,
            half_width: self.grid.half_width,
            per_b: self.grid.n,
            tol: self.tol,
            max_iter: self.max_iter,
            force: self.force,
            sigma0: self.sigma0,
            a2_kernel: self.a2_kernel,
            sine_modes: self.sine_modes,
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    /// Market constants with σ₀ attached; both must be present.
    pub fn model_params(&self) -> Result<ModelParams> {
        let market = self
            .market
            .ok_or_else(|| VolcalError::Config("config needs a \"market\" block".into()))?;
        let sigma0 = self
            .sigma0
            .ok_or_else(|| VolcalError::Config("config needs \"sigma0\"".into()))?;
        market.with_sigma0(sigma0)
    }

    pub fn grid_for(&self, params: &ModelParams) -> Result<Grid> {
        self.calibration().grid(params)
    }

    /// Checks everything the given command reads, before any computation.
    pub fn validate(&self, command: Command) -> Result<()> {
        let bad = |msg: String| Err(VolcalError::Config(msg));
        self.calibration().validate()?;
        if self.force && self.method != Method::Fredholm {
            return bad(format!(
                "--force only applies to the fredholm method, not {:?}",
                self.method
            ));
        }
        if let Some(m) = &self.market {
            m.with_sigma0(self.sigma0.unwrap_or(1.0))?;
        }
        match command {
            Command::Synth => {
                self.model_params()?;
                let s = &self.synth;
                if !s.perturbation.bumps.is_empty() && s.perturbation.file.is_some() {
                    return bad("perturbation gives both bumps and a file".into());
                }
                if let Some(n) = s.noise {
                    if !(n.half_width >= 0.0 && n.half_width.is_finite()) {
                        return bad(format!("noise half_width must be non-negative, got {}", n.half_width));
                    }
                }
                if !(s.strike_span > 0.0 && s.strike_span.is_finite()) {
                    return bad(format!("strike_span must be positive, got {}", s.strike_span));
                }
                s.forward.validate()?;
            }
            Command::Calibrate => {
                if self.quotes.is_none() {
                    return bad("calibrate needs a quote file (\"quotes\" or --quotes)".into());
                }
                if self.times.iter().any(|t| !t.is_finite()) {
                    return bad("times must be finite".into());
                }
            }
            Command::Check => {
                self.model_params()?;
                if let Some(s) = self.sweep {
                    if !(s.b_min > 0.0 && s.b_min < s.b_max && s.b_max.is_finite()) || s.count < 2 {
                        return bad(format!(
                            "sweep needs 0 < b_min < b_max and count ≥ 2, got {} {} {}",
                            s.b_min, s.b_max, s.count
                        ));
                    }
                }
            }
            Command::Kernels => {
                self.model_params()?;
                let k = &self.kernels;
                if k.taus.is_empty() || k.taus.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                    return bad("kernel taus must be a non-empty list of positive times".into());
                }
                if !(k.extent > 0.0 && k.extent.is_finite()) || k.points < 2 {
                    return bad("kernel table needs extent > 0 and at least 2 points".into());
                }
            }
        }
        Ok(())
    }
}
