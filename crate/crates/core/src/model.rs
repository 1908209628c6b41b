//! Domain types and the change of variables between market coordinates
//! (strike K, expiry T) and the heat-equation frame (y, τ).
//!
//! `y = ln(K/s*)` is log-moneyness and `τ = T − t*` time to expiry. The local
//! volatility is modelled as ½σ²(s, t) = ½σ₀² + f₀*(s) + t·f₁*(s) with the
//! perturbation supported on a strike interval ω* around the spot.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VolcalError};

/// Market and model constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub s_star: f64,
    pub t_star: f64,
    pub r: f64,
    pub mu: f64,
    pub sigma0: f64,
    #[serde(rename = "T1")]
    pub t1: f64,
    #[serde(rename = "T2")]
    pub t2: f64,
}

impl ModelParams {
    pub fn new(s_star: f64, t_star: f64, r: f64, mu: f64, sigma0: f64, t1: f64, t2: f64) -> Result<Self> {
        let p = ModelParams {
            s_star,
            t_star,
            r,
            mu,
            sigma0,
            t1,
            t2,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.s_star, self.t_star, self.r, self.mu, self.sigma0, self.t1, self.t2]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(VolcalError::domain("model parameters must be finite"));
        }
        if self.s_star <= 0.0 {
            return Err(VolcalError::domain(format!(
                "spot must be positive, got {}",
                self.s_star
            )));
        }
        if self.sigma0 <= 0.0 {
            return Err(VolcalError::domain(format!(
                "sigma0 must be positive, got {}",
                self.sigma0
            )));
        }
        if !(self.t_star < self.t1 && self.t1 < self.t2) {
            return Err(VolcalError::domain(format!(
                "expiries must satisfy t* < T1 < T2, got t*={} T1={} T2={}",
                self.t_star, self.t1, self.t2
            )));
        }
        Ok(())
    }

    pub fn with_sigma0(&self, sigma0: f64) -> Result<Self> {
        let mut p = *self;
        p.sigma0 = sigma0;
        p.validate()?;
        Ok(p)
    }

    pub fn tau1(&self) -> f64 {
        self.t1 - self.t_star
    }

    pub fn tau2(&self) -> f64 {
        self.t2 - self.t_star
    }

    /// τ_j for j ∈ {1, 2}.
    pub fn tau(&self, j: usize) -> f64 {
        match j {
            1 => self.tau1(),
            2 => self.tau2(),
            _ => panic!("expiry index must be 1 or 2, got {j}"),
        }
    }

    /// c = ½ + μ/σ₀².
    pub fn c(&self) -> f64 {
        0.5 + self.mu / (self.sigma0 * self.sigma0)
    }

    /// d = −(σ₀²/2 + μ)²/(2σ₀²) + μ − r.
    pub fn d(&self) -> f64 {
        // expanded: −σ₀²/8 + μ/2 − μ²/(2σ₀²) − r
        let s2 = self.sigma0 * self.sigma0;
        -s2 / 8.0 + 0.5 * self.mu - self.mu * self.mu / (2.0 * s2) - self.r
    }

    /// e^{cy+dτ}, mapping the heat-frame W to the price perturbation V = U − V₀.
    pub fn frame_factor(&self, y: f64, tau: f64) -> f64 {
        (self.c() * y + self.d() * tau).exp()
    }

    /// S = s*/(σ₀√(2π)), the source amplitude of the approximate problem.
    pub fn source_scale(&self) -> f64 {
        self.s_star / (self.sigma0 * (2.0 * PI).sqrt())
    }

    /// S_* = s*/(σ₀²√π), the kernel prefactor.
    pub fn kernel_scale(&self) -> f64 {
        self.s_star / (self.sigma0 * self.sigma0 * PI.sqrt())
    }
}

/// Uniform log-moneyness grid on Ω = (−B, B) with the data interval
/// ω = (−b, b). Both 0 and ±b are nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    b: f64,
    half_width: f64,
    step: f64,
    per_b: usize,
    n: usize,
}

impl Grid {
    /// Grid with `per_b` intervals on [0, b]; B is `half_width_min` rounded up
    /// to a whole number of steps.
    pub fn new(b: f64, half_width_min: f64, per_b: usize) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(VolcalError::domain(format!(
                "data half-width b must be positive, got {b}"
            )));
        }
        if !(half_width_min >= b && half_width_min.is_finite()) {
            return Err(VolcalError::domain(format!(
                "domain half-width B={half_width_min} must be at least b={b}"
            )));
        }
        if per_b == 0 {
            return Err(VolcalError::domain("need at least one interval per b"));
        }
        let step = b / per_b as f64;
        let half_steps = ((half_width_min / step) - 1e-9).ceil().max(per_b as f64) as usize;
        let n = 2 * half_steps + 1;
        if n < 3 {
            return Err(VolcalError::domain("grid needs at least 3 nodes"));
        }
        Ok(Grid {
            b,
            half_width: half_steps as f64 * step,
            step,
            per_b,
            n,
        })
    }

    /// Grid with roughly `n` nodes on (−B, B), snapped so that ±b are nodes.
    pub fn with_count(b: f64, half_width: f64, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(VolcalError::domain(format!("grid needs at least 3 nodes, got {n}")));
        }
        if !(half_width > 0.0) {
            return Err(VolcalError::domain("B must be positive"));
        }
        let approx_step = 2.0 * half_width / (n - 1) as f64;
        let per_b = ((b / approx_step).round() as usize).max(1);
        Grid::new(b, half_width, per_b)
    }

    /// Default truncation B = max(5b, b + 6σ₀√τ₂).
    pub fn default_half_width(b: f64, sigma0: f64, tau2: f64) -> f64 {
        (5.0 * b).max(b + 6.0 * sigma0 * tau2.sqrt())
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn per_b(&self) -> usize {
        self.per_b
    }

    pub fn node(&self, i: usize) -> f64 {
        let half = (self.n - 1) / 2;
        (i as f64 - half as f64) * self.step
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    pub fn center(&self) -> usize {
        (self.n - 1) / 2
    }

    /// Indices of the closed data interval [−b, b].
    pub fn omega_range(&self) -> std::ops::RangeInclusive<usize> {
        let c = self.center();
        (c - self.per_b)..=(c + self.per_b)
    }

    pub fn omega_nodes(&self) -> Vec<f64> {
        self.omega_range().map(|i| self.node(i)).collect()
    }

    pub fn omega_len(&self) -> usize {
        2 * self.per_b + 1
    }

    /// Same b, B with the step halved.
    pub fn refined(&self) -> Self {
        Grid::new(self.b, self.half_width, self.per_b * 2).expect("refining a valid grid")
    }
}

/// One quoted call option.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quote {
    pub strike: f64,
    pub price: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bid: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ask: Option<f64>,
}

/// Market prices u*(K, T_j) for one expiry, strikes strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuoteSlice {
    pub expiry: f64,
    quotes: Vec<Quote>,
}

impl QuoteSlice {
    pub fn new(expiry: f64, quotes: Vec<Quote>) -> Result<Self> {
        if !expiry.is_finite() {
            return Err(VolcalError::domain("expiry must be finite"));
        }
        for (i, q) in quotes.iter().enumerate() {
            if !(q.strike > 0.0 && q.strike.is_finite()) {
                return Err(VolcalError::domain(format!("quote {i}: strike must be positive")));
            }
            if !(q.price > 0.0 && q.price.is_finite()) {
                return Err(VolcalError::domain(format!("quote {i}: price must be positive")));
            }
        }
        if quotes.windows(2).any(|w| w[1].strike <= w[0].strike) {
            return Err(VolcalError::domain("strikes must be strictly increasing"));
        }
        Ok(QuoteSlice { expiry, quotes })
    }

    pub fn quotes(&self) -> &[Quote] {
        &self.quotes
    }

    pub fn len(&self) -> usize {
        self.quotes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quotes.is_empty()
    }

    /// Strikes at which the call price increases with strike (arbitrage).
    pub fn monotonicity_warnings(&self) -> Vec<f64> {
        self.quotes
            .windows(2)
            .filter(|w| w[1].price > w[0].price)
            .map(|w| w[1].strike)
            .collect()
    }
}

/// y = ln(K/s*), τ = T − t*.
pub fn to_log_vars(params: &ModelParams, strike: f64, expiry: f64) -> Result<(f64, f64)> {
    if !(strike > 0.0) {
        return Err(VolcalError::domain(format!("strike must be positive, got {strike}")));
    }
    if expiry < params.t_star {
        return Err(VolcalError::domain(format!(
            "expiry {expiry} precedes valuation time {}",
            params.t_star
        )));
    }
    Ok(((strike / params.s_star).ln(), expiry - params.t_star))
}

/// K = s*·e^y, T = τ + t*.
pub fn from_log_vars(params: &ModelParams, y: f64, tau: f64) -> (f64, f64) {
    (params.s_star * y.exp(), tau + params.t_star)
}

/// A perturbation (f₀, f₁) of ½σ₀² in log variables, as functions of y.
pub trait Perturbation: Sync {
    fn f0(&self, y: f64) -> f64;
    fn f1(&self, y: f64) -> f64;
    /// Half-width b of the support interval (−b, b).
    fn support(&self) -> f64;
    /// Points inside (−b, b) where f₀ or f₁ is not smooth.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Compact polynomial bump a·(1 − ((y − c)/w)²)⁶ (C⁵).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: f64,
    pub width: f64,
    #[serde(default)]
    pub amp0: f64,
    #[serde(default)]
    pub amp1: f64,
}

impl Bump {
    fn profile(&self, y: f64) -> f64 {
        let u = (y - self.center) / self.width;
        if u.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - u * u).powi(6)
        }
    }
}

/// Sum of bumps, all inside (−b, b).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpPerturbation {
    pub b: f64,
    pub bumps: Vec<Bump>,
}

impl BumpPerturbation {
    pub fn new(b: f64, bumps: Vec<Bump>) -> Result<Self> {
        for bump in &bumps {
            if !(bump.width > 0.0) {
                return Err(VolcalError::domain("bump width must be positive"));
            }
            if bump.center - bump.width < -b - 1e-12 || bump.center + bump.width > b + 1e-12 {
                return Err(VolcalError::domain(format!(
                    "bump at {} with width {} leaves (-{b}, {b})",
                    bump.center, bump.width
                )));
            }
        }
        Ok(BumpPerturbation { b, bumps })
    }

    pub fn zero(b: f64) -> Self {
        BumpPerturbation { b, bumps: Vec::new() }
    }

    /// Same shape with all amplitudes multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let bumps = self
            .bumps
            .iter()
            .map(|b| Bump {
                amp0: b.amp0 * factor,
                amp1: b.amp1 * factor,
                ..*b
            })
            .collect();
        BumpPerturbation { b: self.b, bumps }
    }
}

impl Perturbation for BumpPerturbation {
    fn f0(&self, y: f64) -> f64 {
        self.bumps.iter().map(|b| b.amp0 * b.profile(y)).sum()
    }

    fn f1(&self, y: f64) -> f64 {
        self.bumps.iter().map(|b| b.amp1 * b.profile(y)).sum()
    }

    fn support(&self) -> f64 {
        self.b
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.bumps
            .iter()
            .flat_map(|b| [b.center - b.width, b.center + b.width])
            .collect()
    }
}

/// (f₀, f₁) sampled on every node of a grid; zero outside ω.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationPair {
    pub grid: Grid,
    pub f0: Vec<f64>,
    pub f1: Vec<f64>,
}

impl PerturbationPair {
    pub fn zeros(grid: &Grid) -> Self {
        PerturbationPair {
            grid: grid.clone(),
            f0: vec![0.0; grid.len()],
            f1: vec![0.0; grid.len()],
        }
    }

    pub fn new(grid: &Grid, f0: Vec<f64>, f1: Vec<f64>) -> Result<Self> {
        for v in [&f0, &f1] {
            if v.len() != grid.len() {
                return Err(VolcalError::GridMismatch {
                    expected: grid.len(),
                    got: v.len(),
                });
            }
        }
        Ok(PerturbationPair {
            grid: grid.clone(),
            f0,
            f1,
        })
    }

    /// Samples `p` on the grid, forcing zero at and beyond ±b.
    pub fn sample<P: Perturbation + ?Sized>(grid: &Grid, p: &P) -> Self {
        let b = grid.b();
        let (f0, f1) = grid
            .nodes()
            .into_iter()
            .map(|y| {
                if y.abs() >= b - 1e-14 {
                    (0.0, 0.0)
                } else {
                    (p.f0(y), p.f1(y))
                }
            })
            .unzip();
        PerturbationPair {
            grid: grid.clone(),
            f0,
            f1,
        }
    }

    /// Builds (f₀, f₁) in log variables from original-variable functions of
    /// the stock price: f₁(y) = f₁*(s*e^y), f₀(y) = f₀*(s*e^y) + t*·f₁(y).
    pub fn from_original<F0, F1>(grid: &Grid, params: &ModelParams, f0_star: F0, f1_star: F1) -> Self
    where
        F0: Fn(f64) -> f64,
        F1: Fn(f64) -> f64,
    {
        let b = grid.b();
        let (f0, f1) = grid
            .nodes()
            .into_iter()
            .map(|y| {
                if y.abs() >= b - 1e-14 {
                    return (0.0, 0.0);
                }
                let s = params.s_star * y.exp();
                let g1 = f1_star(s);
                (f0_star(s) + params.t_star * g1, g1)
            })
            .unzip();
        PerturbationPair {
            grid: grid.clone(),
            f0,
            f1,
        }
    }

    /// Inverse of [`PerturbationPair::from_original`]: rows of (s, f₀*, f₁*).
    pub fn to_original(&self, params: &ModelParams) -> Vec<(f64, f64, f64)> {
        self.grid
            .nodes()
            .into_iter()
            .zip(self.f0.iter().zip(&self.f1))
            .map(|(y, (&g0, &g1))| (params.s_star * y.exp(), g0 - params.t_star * g1, g1))
            .collect()
    }

    /// Largest |f| over nodes with |y| ≥ b (should be zero).
    pub fn support_violation(&self) -> f64 {
        let b = self.grid.b();
        self.grid
            .nodes()
            .into_iter()
            .enumerate()
            .filter(|(_, y)| y.abs() >= b - 1e-14)
            .map(|(i, _)| self.f0[i].abs().max(self.f1[i].abs()))
            .fold(0.0, f64::max)
    }

    /// max(‖f₀‖∞, ‖f₁‖∞·τ₂) relative to σ₀²/2; warn above 0.25.
    pub fn amplitude_ratio(&self, params: &ModelParams) -> f64 {
        let half_var = 0.5 * params.sigma0 * params.sigma0;
        let m0 = sup_norm(&self.f0);
        let m1 = sup_norm(&self.f1) * params.tau2();
        m0.max(m1) / half_var
    }

    pub fn omega_f0(&self) -> Vec<f64> {
        self.grid.omega_range().map(|i| self.f0[i]).collect()
    }

    pub fn omega_f1(&self) -> Vec<f64> {
        self.grid.omega_range().map(|i| self.f1[i]).collect()
    }
}

/// Threshold on [`PerturbationPair::amplitude_ratio`] above which the
/// linearization is questionable.
pub const AMPLITUDE_WARNING: f64 = 0.25;

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
