//! From quotes to the sampled curves the solvers consume.
//!
//! Prices are moved to log-moneyness, the baseline price V₀ at σ₀ is
//! subtracted, and the difference V = U − V₀ is smoothed by a cubic spline.
//! The solvers work with W = e^{−cy−dτ}V, whose second derivative follows
//! exactly from the spline's. W″ feeds the Fredholm solver; the tapered
//! extension of W onto Ω feeds the spectral solvers.

pub mod extend;
pub mod io;
pub mod spline;

pub use extend::{extend_data, taper};
pub use io::{
    fmt17, load_quotes, parse_quotes_csv, parse_quotes_json, write_columns, write_quotes_csv, write_quotes_json,
    MarketParams, QuoteFormat, QuoteSet,
};
pub use spline::{gcv_scores, SmoothedCurve, Smoothing};

use crate::black_scholes::{baseline_price, implied_vol};
use crate::error::{Result, VolcalError};
use crate::model::{Grid, ModelParams, QuoteSlice};

/// One expiry after smoothing.
#[derive(Debug, Clone)]
pub struct DataSlice {
    pub tau: f64,
    pub c: f64,
    pub d: f64,
    /// Log-moneyness of each quote.
    pub sites: Vec<f64>,
    pub prices: Vec<f64>,
    /// V₀ at each site.
    pub baseline: Vec<f64>,
    /// Smoothed V = U − V₀.
    pub curve: SmoothedCurve,
}

impl DataSlice {
    fn inverse_factor(&self, y: f64) -> f64 {
        (-self.c * y - self.d * self.tau).exp()
    }

    /// W = e^{−cy−dτ}V.
    pub fn w(&self, y: f64) -> f64 {
        self.inverse_factor(y) * self.curve.eval(y)
    }

    /// W″ = e^{−cy−dτ}(V″ − 2cV′ + c²V).
    pub fn w_xx(&self, y: f64) -> f64 {
        let c = self.c;
        self.inverse_factor(y) * (self.curve.d2(y) - 2.0 * c * self.curve.d1(y) + c * c * self.curve.eval(y))
    }

    /// Smoothed price U = V₀ + W.
    pub fn price(&self, params: &ModelParams, y: f64) -> f64 {
        baseline_price(params, y, self.tau) + self.curve.eval(y)
    }
}

/// Log-moneyness and prices of a slice.
pub fn log_sites(slice: &QuoteSlice, params: &ModelParams) -> (Vec<f64>, Vec<f64>) {
    slice
        .quotes()
        .iter()
        .map(|q| ((q.strike / params.s_star).ln(), q.price))
        .unzip()
}

/// Smooths V = U − V₀ for one expiry. Needs at least 4 quotes in ω̄.
pub fn smooth_to_c2(slice: &QuoteSlice, smoothing: Smoothing, b: f64, params: &ModelParams) -> Result<DataSlice> {
    let tau = slice.expiry - params.t_star;
    if !(tau > 0.0) {
        return Err(VolcalError::domain(format!("expiry {} is not after t*", slice.expiry)));
    }
    let (sites, prices) = log_sites(slice, params);
    let inside = sites.iter().filter(|y| y.abs() <= b * (1.0 + 1e-12)).count();
    if inside < 4 {
        return Err(VolcalError::TooFewQuotes { needed: 4, got: inside });
    }
    let baseline: Vec<f64> = sites.iter().map(|&y| baseline_price(params, y, tau)).collect();
    let w: Vec<f64> = prices.iter().zip(&baseline).map(|(u, v)| u - v).collect();
    let curve = SmoothedCurve::fit(&sites, &w, smoothing)?;
    Ok(DataSlice {
        tau,
        c: params.c(),
        d: params.d(),
        sites,
        prices,
        baseline,
        curve,
    })
}

/// W″ at the ω-nodes from the spline's exact derivatives.
pub fn second_derivative(data: &DataSlice, grid: &Grid) -> Vec<f64> {
    grid.omega_nodes().iter().map(|&y| data.w_xx(y)).collect()
}

/// σ₀ solving V₀(0, τ₁; σ₀) = U₁(0), with U₁ the price spline of the first
/// slice.
pub fn implied_sigma0(slice: &QuoteSlice, market: &MarketParams, smoothing: Smoothing) -> Result<f64> {
    let probe = market.with_sigma0(1.0)?;
    let (sites, prices) = log_sites(slice, &probe);
    let curve = SmoothedCurve::fit(&sites, &prices, smoothing)?;
    let (lo, hi) = curve.range();
    if !(lo <= 0.0 && hi >= 0.0) {
        return Err(VolcalError::Precondition(
            "quotes at the first expiry do not bracket the spot".into(),
        ));
    }
    implied_vol(&probe, curve.eval(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::black_scholes::bs_call_price;
    use crate::model::Quote;

    fn params() -> ModelParams {
        ModelParams::new(100.0, 0.0, 0.01, 0.02, 0.3, 0.5, 1.0).unwrap()
    }

    fn bs_slice(p: &ModelParams, expiry: f64, n: usize) -> QuoteSlice {
        let quotes = (0..n)
            .map(|i| {
                let strike = 80.0 + 40.0 * i as f64 / (n - 1) as f64;
                Quote {
                    strike,
                    price: bs_call_price(p, strike, expiry - p.t_star, p.sigma0).unwrap(),
                    bid: None,
                    ask: None,
                }
            })
            .collect();
        QuoteSlice::new(expiry, quotes).unwrap()
    }

    #[test]
    fn baseline_quotes_give_flat_w() {
        let p = params();
        let d = smooth_to_c2(&bs_slice(&p, 1.0, 41), Smoothing::Gcv, 0.1, &p).unwrap();
        assert!(d.sites.iter().all(|&y| d.w(y).abs() < 1e-12));
        assert!((d.price(&p, 0.0) - bs_call_price(&p, 100.0, 1.0, 0.3).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn sigma0_implied_from_spot_price() {
        let p = params();
        let s = implied_sigma0(&bs_slice(&p, 0.5, 41), &MarketParams::from(&p), Smoothing::Fixed(0.0)).unwrap();
        assert!((s - 0.3).abs() < 1e-6, "{s}");
    }

    #[test]
    fn heat_frame_derivative_matches_differences() {
        let p = params();
        let mut slice = bs_slice(&p, 1.0, 81);
        let bumped: Vec<Quote> = slice
            .quotes()
            .iter()
            .map(|q| Quote {
                price: q.price + 0.5 * (q.strike / 100.0).ln().powi(2),
                ..*q
            })
            .collect();
        slice = QuoteSlice::new(1.0, bumped).unwrap();
        let d = smooth_to_c2(&slice, Smoothing::Fixed(0.0), 0.1, &p).unwrap();
        let h = 1e-4;
        for y in [-0.05, 0.0, 0.08] {
            let fd = (d.w(y + h) - 2.0 * d.w(y) + d.w(y - h)) / (h * h);
            assert!((fd - d.w_xx(y)).abs() < 1e-5 * d.w_xx(y).abs(), "{fd} {}", d.w_xx(y));
            assert!((d.w(y) * p.frame_factor(y, 1.0) - d.curve.eval(y)).abs() < 1e-15);
        }
    }

    #[test]
    fn needs_quotes_inside_omega() {
        let p = params();
        assert!(matches!(
            smooth_to_c2(&bs_slice(&p, 1.0, 5), Smoothing::Gcv, 0.01, &p),
            Err(VolcalError::TooFewQuotes { .. })
        ));
    }
}
