use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use volcal::black_scholes::baseline_price;
use volcal::fredholm::analytic_margins;
use volcal::model::ModelParams;

fn volcal(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_volcal"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn base_config() -> Value {
    json!({
        "market": {"s_star": 100.0, "T1": 0.25, "T2": 0.5},
        "sigma0": 0.4,
        "grid": {"b": 0.02, "n": 40},
        "synth": {"perturbation": {"bumps": [
            {"center": 0.0, "width": 0.015, "amp0": 0.0008},
            {"center": 0.004, "width": 0.012, "amp1": 0.0016}
        ]}}
    })
}

fn write_config(dir: &Path, cfg: &Value) {
    std::fs::write(dir.join("cfg.json"), serde_json::to_string_pretty(cfg).unwrap()).unwrap();
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Columns of a CSV file keyed by header.
fn read_columns(path: &Path) -> Vec<(String, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let mut cols: Vec<(String, Vec<f64>)> = r
        .headers()
        .unwrap()
        .iter()
        .map(|h| (h.to_string(), Vec::new()))
        .collect();
    for rec in r.records() {
        for (c, v) in cols.iter_mut().zip(rec.unwrap().iter()) {
            c.1.push(v.parse().unwrap());
        }
    }
    cols
}

fn column(cols: &[(String, Vec<f64>)], name: &str) -> Vec<f64> {
    cols.iter()
        .find(|c| c.0 == name)
        .unwrap_or_else(|| panic!("no column {name}"))
        .1
        .clone()
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn synth_into(dir: &Path, cfg: &Value, out: &str) {
    write_config(dir, cfg);
    let o = volcal(&["synth", "--config", "cfg.json", "--out", out], dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn zero_perturbation_synthesizes_black_scholes_prices() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = base_config();
    cfg["synth"]["perturbation"]["bumps"] = json!([]);
    synth_into(tmp.path(), &cfg, "run");
    let manifest = read_json(&tmp.path().join("run/manifest.json"));
    let pde_tol = manifest["baseline_pde_error"].as_f64().unwrap();
    assert!(pde_tol > 0.0 && pde_tol < 1e-3);
    let p = ModelParams::new(100.0, 0.0, 0.0, 0.0, 0.4, 0.25, 0.5).unwrap();
    let cols = read_columns(&tmp.path().join("run/quotes.csv"));
    let (t, k, price) = (column(&cols, "expiry"), column(&cols, "strike"), column(&cols, "price"));
    for i in 0..t.len() {
        let v0 = baseline_price(&p, (k[i] / 100.0).ln(), t[i]);
        assert!((price[i] - v0).abs() <= pde_tol, "{} vs {v0}", price[i]);
    }
    assert_eq!(manifest["config"]["sigma0"], json!(0.4));
}

#[test]
fn synth_is_reproducible_with_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = base_config();
    cfg["synth"]["noise"] = json!({"half_width": 1e-4, "seed": 7});
    cfg["synth"]["forward"] = json!({"time_steps": 100});
    synth_into(tmp.path(), &cfg, "a");
    synth_into(tmp.path(), &cfg, "b");
    for file in ["quotes.csv", "quotes.json", "ground_truth.csv"] {
        let a = std::fs::read(tmp.path().join("a").join(file)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
    let manifest = |d: &str| {
        let mut m = read_json(&tmp.path().join(d).join("manifest.json"));
        m["config"]["out"] = Value::Null;
        m
    };
    assert_eq!(manifest("a"), manifest("b"));
}

#[test]
fn calibrate_recovers_synthetic_ground_truth() {
    let tmp = tempfile::tempdir().unwrap();
    synth_into(tmp.path(), &base_config(), "run");
    let truth = read_columns(&tmp.path().join("run/ground_truth.csv"));
    let (tf0, tf1) = (column(&truth, "f0"), column(&truth, "f1"));
    let mut recovered = Vec::new();
    for method in ["fredholm", "spectral"] {
        let out = format!("cal_{method}");
        let o = volcal(
            &[
                "calibrate",
                "--config",
                "cfg.json",
                "--quotes",
                "run/quotes.csv",
                "--method",
                method,
                "--out",
                &out,
            ],
            tmp.path(),
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let cols = read_columns(&tmp.path().join(&out).join("perturbation.csv"));
        let (f0, f1) = (column(&cols, "f0"), column(&cols, "f1"));
        assert_eq!(f0.len(), tf0.len());
        // noiseless data: the remaining error is the linearization at amplitude 0.01·σ₀²
        let err = (sup_diff(&f0, &tf0) + sup_diff(&f1, &tf1)) / (sup(&tf0) + sup(&tf1));
        assert!(err < 0.05, "{method}: relative error {err}");
        recovered.push((f0, f1));

        let report = read_json(&tmp.path().join(&out).join("report.json"));
        assert_eq!(report["config"]["method"], json!(method));
        assert_eq!(report["report"]["uniqueness"]["analytic_pass"], json!(true));
        let vol = read_columns(&tmp.path().join(&out).join("local_vol.csv"));
        assert_eq!(
            vol.iter().map(|c| c.0.as_str()).collect::<Vec<_>>(),
            ["s", "sigma_t0.25", "sigma_t0.5"]
        );
    }
    let (fr, sp) = (&recovered[0], &recovered[1]);
    let gap = (sup_diff(&fr.0, &sp.0) + sup_diff(&fr.1, &sp.1)) / (sup(&tf0) + sup(&tf1));
    assert!(gap < 0.05, "methods differ by {gap}");
}

#[test]
fn constant_volatility_quotes_give_zero_perturbation() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = base_config();
    cfg["synth"]["perturbation"]["bumps"] = json!([]);
    synth_into(tmp.path(), &cfg, "run");
    let o = volcal(
        &["calibrate", "--quotes", "run/quotes.json", "--out", "cal"],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&tmp.path().join("cal/report.json"));
    assert!((report["report"]["sigma0"].as_f64().unwrap() - 0.4).abs() < 1e-8);
    let cols = read_columns(&tmp.path().join("cal/perturbation.csv"));
    let worst = sup(&column(&cols, "f0")).max(sup(&column(&cols, "f1")));
    assert!(worst <= 1e-6 * 0.16, "{worst}");
}

#[test]
fn refuses_when_the_condition_fails_unless_forced() {
    let tmp = tempfile::tempdir().unwrap();
    synth_into(tmp.path(), &base_config(), "run");
    let args = [
        "calibrate",
        "--config",
        "cfg.json",
        "--quotes",
        "run/quotes.csv",
        "--b",
        "0.1",
        "--grid-n",
        "10",
    ];
    let o = volcal(&[&args[..], &["--out", "refused"]].concat(), tmp.path());
    assert_eq!(code(&o), 3);
    let refusal = read_json(&tmp.path().join("refused/refusal.json"));
    assert_eq!(refusal["uniqueness"]["analytic_pass"], json!(false));
    assert!(!tmp.path().join("refused/perturbation.csv").exists());
    let o = volcal(&[&args[..], &["--out", "forced", "--force"]].concat(), tmp.path());
    assert_eq!(code(&o), 0);
    assert_eq!(
        read_json(&tmp.path().join("forced/report.json"))["report"]["forced"],
        json!(true)
    );
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    synth_into(tmp.path(), &base_config(), "run");
    let run = |extra: &[&str]| {
        code(&volcal(
            &[
                &[
                    "calibrate",
                    "--config",
                    "cfg.json",
                    "--quotes",
                    "run/quotes.csv",
                    "--out",
                    "x",
                ],
                extra,
            ]
            .concat(),
            tmp.path(),
        ))
    };
    assert_eq!(run(&["--method", "spectral", "--force"]), 2);
    assert_eq!(run(&["--B", "0.01"]), 2);
    assert_eq!(run(&["--tol", "-1"]), 2);
    assert_eq!(run(&["--lambda", "soft"]), 2);
    assert_eq!(code(&volcal(&["calibrate", "--quotes", "missing.csv"], tmp.path())), 2);

    let mut cfg = base_config();
    cfg["max_iter"] = json!(1);
    write_config(tmp.path(), &cfg);
    assert_eq!(run(&[]), 4);

    std::fs::write(
        tmp.path().join("cfg.json"),
        "{\"grid\": {\"b\": 0.02, \"n\": 40}, \"extra\": 1}",
    )
    .unwrap();
    let o = volcal(&["check", "--config", "cfg.json"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
}

#[test]
fn check_passes_small_b_and_fails_large_b() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = base_config();
    cfg["sweep"] = json!({"b_min": 0.01, "b_max": 0.1, "count": 4});
    write_config(tmp.path(), &cfg);
    let o = volcal(
        &[
            "check", "--config", "cfg.json", "--b", "0.005", "--grid-n", "20", "--out", "small",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("verdict    pass"));
    let report = read_json(&tmp.path().join("small/check.json"));
    assert!(report["uniqueness"]["rho_hat"].as_f64().unwrap() < 1.0);
    assert_eq!(report["config"]["grid"]["b"], json!(0.005));

    let o = volcal(
        &[
            "check", "--config", "cfg.json", "--b", "0.3", "--grid-n", "10", "--out", "large",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 3);

    let sweep = read_columns(&tmp.path().join("small/sweep.csv"));
    let bs = column(&sweep, "b");
    assert_eq!(bs.len(), 4);
    for (i, &b) in bs.iter().enumerate() {
        let (m1, m2) = analytic_margins(0.25, 0.5, 0.4, b);
        assert_eq!(column(&sweep, "margin1")[i], m1);
        assert_eq!(column(&sweep, "margin2")[i], m2);
    }
    let rho = column(&sweep, "rho_hat");
    assert!(rho.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn kernel_tables_per_tau_with_oracle_column() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = base_config();
    cfg["kernels"] = json!({"taus": [0.25, 0.5, 1.0], "oracle": true});
    write_config(tmp.path(), &cfg);
    let o = volcal(&["kernels", "--config", "cfg.json", "--out", "k"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = read_json(&tmp.path().join("k/kernels.json"));
    assert_eq!(summary["tables"].as_array().unwrap().len(), 3);
    for tau in ["0.25", "0.5", "1"] {
        let cols = read_columns(&tmp.path().join(format!("k/kernels_tau{tau}.csv")));
        let (x, y, k0) = (column(&cols, "x"), column(&cols, "y"), column(&cols, "k0"));
        assert_eq!(x.len(), 21 * 21);
        let origin = (0..x.len())
            .find(|&i| x[i].abs() < 1e-12 && y[i].abs() < 1e-12)
            .unwrap();
        assert!((k0[origin] / (100.0 / (2.0 * 0.16)) - 1.0).abs() < 1e-12);
        let dev = sup(&column(&cols, "k0_oracle_dev")).max(sup(&column(&cols, "k1_oracle_dev")));
        assert!(dev <= 1e-8, "tau {tau}: {dev}");
    }
}

#[test]
fn sampled_perturbation_file_is_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let rows: String = (0..=40)
        .map(|i| {
            let y = -0.02 + 0.001 * i as f64;
            let bump = (1.0 - (y / 0.02).powi(2)).max(0.0).powi(3);
            format!("{y},{},{}\n", 5e-4 * bump, -3e-4 * bump)
        })
        .collect();
    std::fs::write(tmp.path().join("truth.csv"), format!("y,f0,f1\n{rows}")).unwrap();
    let mut cfg = base_config();
    cfg["synth"]["perturbation"] = json!({"file": "truth.csv"});
    synth_into(tmp.path(), &cfg, "run");
    let truth = read_columns(&tmp.path().join("run/ground_truth.csv"));
    assert!((sup(&column(&truth, "f0")) - 5e-4).abs() < 1e-12);
    assert!((sup(&column(&truth, "f1")) - 3e-4).abs() < 1e-12);

    cfg["synth"]["perturbation"]["bumps"] = json!([{"center": 0.0, "width": 0.01, "amp0": 1e-4}]);
    write_config(tmp.path(), &cfg);
    assert_eq!(
        code(&volcal(&["synth", "--config", "cfg.json", "--out", "bad"], tmp.path())),
        2
    );
}
