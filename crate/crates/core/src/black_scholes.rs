//! Constant-volatility call prices in Dupire variables and their inversion.

use crate::error::{Result, VolcalError};
use crate::model::ModelParams;

/// Standard normal distribution function, N(x) = ½ erfc(−x/√2).
pub fn normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return 0.5;
    }
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Call price s*e^{(μ−r)τ}N(d₊) − Ke^{−rτ}N(d₋) with d± = (ln(s*/K) + (μ ± σ²/2)τ)/(σ√τ).
pub fn bs_call_price(params: &ModelParams, strike: f64, tau: f64, sigma: f64) -> Result<f64> {
    if !(strike > 0.0) || !strike.is_finite() {
        return Err(VolcalError::domain(format!("strike must be positive, got {strike}")));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(VolcalError::domain(format!("volatility must be positive, got {sigma}")));
    }
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(VolcalError::domain(format!(
            "time to expiry must be non-negative, got {tau}"
        )));
    }
    Ok(call_unchecked(params, strike, tau, sigma))
}

pub(crate) fn call_unchecked(params: &ModelParams, strike: f64, tau: f64, sigma: f64) -> f64 {
    let s = params.s_star;
    if tau == 0.0 {
        return (s - strike).max(0.0);
    }
    let vol = sigma * tau.sqrt();
    let m = (s / strike).ln();
    let d_plus = (m + (params.mu + 0.5 * sigma * sigma) * tau) / vol;
    let d_minus = d_plus - vol;
    s * ((params.mu - params.r) * tau).exp() * normal_cdf(d_plus)
        - strike * (-params.r * tau).exp() * normal_cdf(d_minus)
}

/// V₀(y, τ): the baseline price at log-moneyness y.
pub fn baseline_price(params: &ModelParams, y: f64, tau: f64) -> f64 {
    call_unchecked(params, params.s_star * y.exp(), tau, params.sigma0)
}

const VOL_LOW: f64 = 1e-6;
const VOL_HIGH: f64 = 5.0;

/// Volatility σ with bs_call_price(K = s*, τ₁, σ) = price.
pub fn implied_vol(params: &ModelParams, price: f64) -> Result<f64> {
    implied_vol_at(params, params.s_star, params.tau1(), price)
}

/// Bracketed bisection with a safeguarded secant step on [1e-6, 5].
pub fn implied_vol_at(params: &ModelParams, strike: f64, tau: f64, price: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(VolcalError::domain(
            "implied volatility needs a positive time to expiry",
        ));
    }
    let price_at = |sigma: f64| call_unchecked(params, strike, tau, sigma);
    let lower = price_at(VOL_LOW);
    let upper = price_at(VOL_HIGH);
    if !(price > lower && price < upper) {
        return Err(VolcalError::NoSolution { price, lower, upper });
    }
    let (mut a, mut b) = (VOL_LOW, VOL_HIGH);
    let (mut fa, mut fb) = (lower - price, upper - price);
    let mut x = 0.5 * (a + b);
    for _ in 0..100 {
        let secant = b - fb * (b - a) / (fb - fa);
        let width = b - a;
        x = if secant.is_finite() && secant > a + 0.05 * width && secant < b - 0.05 * width {
            secant
        } else {
            0.5 * (a + b)
        };
        let fx = price_at(x) - price;
        if fx == 0.0 {
            return Ok(x);
        }
        if (fx < 0.0) == (fa < 0.0) {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
        if b - a <= 1e-15 * x || (fx.abs() <= 1e-15 * price && b - a <= 1e-12 * x) {
            break;
        }
    }
    Ok(x)
}

/// Price of the at-the-money call when μ = r = 0: s*(N(½σ√τ) − N(−½σ√τ)).
pub fn atm_driftless(s_star: f64, tau: f64, sigma: f64) -> f64 {
    let h = 0.5 * sigma * tau.sqrt();
    // N(h) − N(−h) = erf(h/√2), accurate for small h
    s_star * libm::erf(h / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(mu: f64, r: f64) -> ModelParams {
        ModelParams::new(100.0, 0.0, r, mu, 0.3, 0.5, 1.0).unwrap()
    }

    #[test]
    fn cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(-1.0) - (1.0 - normal_cdf(1.0))).abs() < 1e-16);
        // quadrature of the density (mpmath)
        let n1 = 0.841_344_746_068_542_9;
        assert!((normal_cdf(1.0) / n1 - 1.0).abs() < 1e-12);
        assert!(normal_cdf(-40.0) >= 0.0 && normal_cdf(40.0) <= 1.0);
    }

    #[test]
    fn expiry_gives_payoff() {
        let p = params(0.01, 0.03);
        assert_eq!(bs_call_price(&p, 80.0, 0.0, 0.2).unwrap(), 20.0);
        assert_eq!(bs_call_price(&p, 120.0, 0.0, 0.2).unwrap(), 0.0);
    }

    #[test]
    fn driftless_atm_formula() {
        let p = params(0.0, 0.0);
        let v = bs_call_price(&p, 100.0, p.tau1(), p.sigma0).unwrap();
        let h = 0.5 * p.sigma0 * p.tau1().sqrt();
        let want = 100.0 * (normal_cdf(h) - normal_cdf(-h));
        assert!((v - want).abs() < 1e-12);
        assert!((atm_driftless(100.0, p.tau1(), p.sigma0) - want).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = params(0.0, 0.0);
        assert!(bs_call_price(&p, 0.0, 1.0, 0.2).is_err());
        assert!(bs_call_price(&p, 100.0, 1.0, 0.0).is_err());
        assert!(bs_call_price(&p, 100.0, -1.0, 0.2).is_err());
    }

    #[test]
    fn implied_vol_round_trips() {
        let p = params(0.0, 0.0);
        let price = bs_call_price(&p, 100.0, p.tau1(), 0.2).unwrap();
        assert!((implied_vol(&p, price).unwrap() - 0.2).abs() < 1e-10);

        let q = params(0.01, 0.03);
        let price = bs_call_price(&q, 100.0, q.tau1(), 0.45).unwrap();
        assert!((implied_vol(&q, price).unwrap() - 0.45).abs() < 1e-10);
    }

    #[test]
    fn intrinsic_price_has_no_solution() {
        let p = params(0.0, 0.0);
        match implied_vol(&p, 0.0) {
            Err(VolcalError::NoSolution { lower, upper, .. }) => assert!(lower < upper),
            other => panic!("expected NoSolution, got {other:?}"),
        }
        assert!(implied_vol(&p, 100.0).is_err());
    }
}
