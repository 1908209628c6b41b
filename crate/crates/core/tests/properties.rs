use proptest::prelude::*;
use volcal::black_scholes::{bs_call_price, implied_vol};
use volcal::kernels::{kernel_k0, KernelParams};
use volcal::model::{from_log_vars, to_log_vars, ModelParams};
use volcal::pipeline::{parse_quotes_csv, parse_quotes_json, write_quotes_csv};
use volcal::quadrature::adaptive;
use volcal::special::{dawson, scaled_upper_gauss, upper_gauss_integral, HALF_SQRT_PI};
use volcal::spectral::{amplification, determinant_d, time_integral_minus, time_integral_plus};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config(10_000))]

    #[test]
    fn scaled_gauss_is_bounded(z in 0.0f64..1e6) {
        let v = scaled_upper_gauss(z);
        prop_assert!(v > 0.0 && v <= HALF_SQRT_PI);
        prop_assert!(upper_gauss_integral(z).is_finite() && dawson(z).is_finite());
    }
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn call_price_monotone(
        s in 50.0f64..150.0,
        r in 0.0f64..0.05,
        extra in 0.0f64..0.05,
        k in 40.0f64..160.0,
        dk in 0.01f64..10.0,
        sigma in 0.05f64..1.5,
        ds in 0.001f64..0.3,
        tau in 0.05f64..2.0,
        dt in 0.001f64..0.5,
    ) {
        // drift at least the rate, so the forward does not shrink with expiry
        let p = ModelParams::new(s, 0.0, r, r + extra, 0.3, 0.5, 1.0).unwrap();
        let c = bs_call_price(&p, k, tau, sigma).unwrap();
        prop_assert!(bs_call_price(&p, k + dk, tau, sigma).unwrap() <= c + 1e-12 * s);
        prop_assert!(bs_call_price(&p, k, tau, sigma + ds).unwrap() >= c - 1e-12 * s);
        prop_assert!(bs_call_price(&p, k, tau + dt, sigma).unwrap() >= c - 1e-12 * s);
    }

    #[test]
    fn implied_vol_inverts_price(sigma in 0.05f64..2.0, mu in -0.03f64..0.03, r in 0.0f64..0.05, t1 in 0.05f64..2.0) {
        let p = ModelParams::new(100.0, 0.0, r, mu, 0.3, t1, t1 + 1.0).unwrap();
        let price = bs_call_price(&p, 100.0, t1, sigma).unwrap();
        prop_assert!((implied_vol(&p, price).unwrap() - sigma).abs() <= 1e-10);
    }

    #[test]
    fn log_variables_round_trip(s in 1e-2f64..1e4, strike_ratio in 0.05f64..20.0, t_star in 0.0f64..5.0, dt in 1e-4f64..10.0) {
        let p = ModelParams::new(s, t_star, 0.0, 0.0, 0.3, t_star + 1.0, t_star + 2.0).unwrap();
        let strike = s * strike_ratio;
        let expiry = t_star + dt;
        let (y, tau) = to_log_vars(&p, strike, expiry).unwrap();
        let (k, t) = from_log_vars(&p, y, tau);
        prop_assert!((k - strike).abs() <= 4.0 * f64::EPSILON * strike);
        prop_assert!((t - expiry).abs() <= 4.0 * f64::EPSILON * expiry.max(1.0));
    }

    #[test]
    fn c_and_d_for_zero_rates(sigma0 in 0.01f64..3.0) {
        let p = ModelParams::new(1.0, 0.0, 0.0, 0.0, sigma0, 1.0, 2.0).unwrap();
        prop_assert_eq!(p.c(), 0.5);
        prop_assert_eq!(p.d(), -(sigma0 * sigma0) / 8.0);
    }

    #[test]
    fn k0_depends_on_path_length(x in -0.5f64..0.5, y in -0.5f64..0.5, tau in 0.01f64..2.0, sigma0 in 0.05f64..1.0) {
        let kp = KernelParams::new(1.0, sigma0, tau).unwrap();
        let v = kernel_k0(x, y, &kp);
        prop_assert!(v >= 0.0);
        // reflecting x about y keeps the path length when both sides share y's sign
        let x2 = 2.0 * y - x;
        if (x - y).abs() + y.abs() == (x2 - y).abs() + y.abs() {
            prop_assert!((kernel_k0(x2, y, &kp) - v).abs() <= 1e-14 * v.max(1e-300));
        }
    }

    #[test]
    fn time_integrals_match_quadrature(k in 0usize..3, big_xi in 0.0f64..50.0) {
        let tau = [0.1, 0.25, 1.0][k];
        let a = big_xi * big_xi * tau;
        // θ = τu² removes the endpoint singularity
        let minus = 2.0 * tau.sqrt() * adaptive(|u: f64| (a * (u * u - 1.0)).exp(), 0.0, 1.0, 1e-13, 0.0).unwrap();
        let plus = 2.0 * tau * tau.sqrt() * adaptive(|u: f64| u * u * (a * (u * u - 1.0)).exp(), 0.0, 1.0, 1e-13, 0.0).unwrap();
        prop_assert!((time_integral_minus(tau, big_xi) / minus - 1.0).abs() <= 1e-10);
        prop_assert!((time_integral_plus(tau, big_xi) / plus - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn determinant_positive_and_even(xi in 0.0f64..500.0, t1 in 0.05f64..1.0, gap in 0.01f64..1.0, sigma0 in 0.05f64..1.0) {
        let p = ModelParams::new(1.0, 0.0, 0.0, 0.0, sigma0, t1, t1 + gap).unwrap();
        let d = determinant_d(xi, &p);
        prop_assert!(d > 0.0);
        prop_assert_eq!(d, determinant_d(-xi, &p));
    }

    #[test]
    fn amplification_grows_at_most_like_xi_to_the_fourth(xi in 0.0f64..1000.0) {
        let p = ModelParams::new(1.0, 0.0, 0.0, 0.0, 0.3, 0.25, 0.5).unwrap();
        // constant fitted on a coarse sweep of [0, 1000]
        let fitted = (0..=1000)
            .map(|k| amplification(k as f64, &p) / (1.0 + (k as f64).powi(2)).powi(2))
            .fold(0.0, f64::max);
        prop_assert!(amplification(xi, &p) <= 1.01 * fitted * (1.0 + xi * xi).powi(2));
    }

    #[test]
    fn quote_parsers_never_panic(text in "\\PC{0,200}") {
        let _ = parse_quotes_csv(&text);
        let _ = parse_quotes_json(&text);
    }

    #[test]
    fn csv_write_parse_round_trip(prices in prop::collection::vec(1e-6f64..50.0, 2..20), t1 in 0.01f64..1.0) {
        let csv_rows: String = prices
            .iter()
            .enumerate()
            .map(|(i, p)| format!("{t1},{},{p}\n{},{},{p}\n", 80.0 + i as f64, t1 + 0.5, 80.0 + i as f64))
            .collect();
        let set = parse_quotes_csv(&format!("expiry,strike,price\n{csv_rows}")).unwrap();
        let mut buf = Vec::new();
        write_quotes_csv(&mut buf, &set.slices).unwrap();
        let back = parse_quotes_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        prop_assert_eq!(back.slices, set.slices);
    }
}
