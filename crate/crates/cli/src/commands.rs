use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use volcal::calibrate::calibrate;
use volcal::forward::{synth_quotes, SynthConfig};
use volcal::fredholm::{analytic_margins, check_uniqueness, UniquenessReport};
use volcal::kernels::{kernel_k0, kernel_k1, kernel_quadrature_oracle, KernelParams};
use volcal::model::{BumpPerturbation, Grid, ModelParams, Perturbation, PerturbationPair};
use volcal::pipeline::{load_quotes, write_columns, write_quotes_csv, write_quotes_json, MarketParams};
use volcal::{Result, VolcalError};

use crate::config::{Command, RunConfig};

/// Exit status of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    ConditionFailed,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir).map_err(|e| VolcalError::Config(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| VolcalError::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(BufWriter::new(file))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| VolcalError::Io(e.into()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Linear interpolation through rows of (y, f₀, f₁).
struct TablePerturbation {
    b: f64,
    y: Vec<f64>,
    f0: Vec<f64>,
    f1: Vec<f64>,
}

impl TablePerturbation {
    fn load(path: &Path, b: f64) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| VolcalError::Config(format!("cannot read {}: {e}", path.display())))?;
        let parse_err = |line: usize, message: String| VolcalError::Parse { line, message };
        let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["y", "f0", "f1"] {
            return Err(parse_err(1, "perturbation table header must be y,f0,f1".into()));
        }
        let (mut y, mut f0, mut f1) = (Vec::new(), Vec::new(), Vec::new());
        for record in reader.records() {
            let record = record.map_err(|e| parse_err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let mut values = [0.0; 3];
            for (v, field) in values.iter_mut().zip(record.iter()) {
                *v = field
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| parse_err(line, format!("not a finite number: {field:?}")))?;
            }
            if y.last().is_some_and(|&last| values[0] <= last) {
                return Err(parse_err(line, "y must be strictly increasing".into()));
            }
            y.push(values[0]);
            f0.push(values[1]);
            f1.push(values[2]);
        }
        if y.len() < 2 {
            return Err(VolcalError::Config("perturbation table needs at least 2 rows".into()));
        }
        Ok(TablePerturbation { b, y, f0, f1 })
    }

    fn interp(&self, v: &[f64], y: f64) -> f64 {
        let last = self.y.len() - 1;
        if y <= self.y[0] || y >= self.y[last] {
            return 0.0;
        }
        let k = self.y.partition_point(|&t| t <= y) - 1;
        let w = (y - self.y[k]) / (self.y[k + 1] - self.y[k]);
        (1.0 - w) * v[k] + w * v[k + 1]
    }
}

impl Perturbation for TablePerturbation {
    fn f0(&self, y: f64) -> f64 {
        self.interp(&self.f0, y)
    }

    fn f1(&self, y: f64) -> f64 {
        self.interp(&self.f1, y)
    }

    fn support(&self) -> f64 {
        self.b
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.y.iter().copied().filter(|y| y.abs() < self.b).collect()
    }
}

fn write_perturbation(dir: &Path, name: &str, pair: &PerturbationPair, params: &ModelParams) -> Result<()> {
    let y = pair.grid.nodes();
    let original = pair.to_original(params);
    let s: Vec<f64> = original.iter().map(|r| r.0).collect();
    let f0s: Vec<f64> = original.iter().map(|r| r.1).collect();
    let f1s: Vec<f64> = original.iter().map(|r| r.2).collect();
    write_columns(
        create(dir, name)?,
        &["y", "f0", "f1", "s", "f0_star", "f1_star"],
        &[&y, &pair.f0, &pair.f1, &s, &f0s, &f1s],
    )
}

#[derive(Serialize)]
struct SynthManifest<'a> {
    config: &'a RunConfig,
    params: ModelParams,
    grid_nodes: usize,
    half_width: f64,
    quotes_csv: &'static str,
    quotes_json: &'static str,
    ground_truth: &'static str,
    quote_counts: [usize; 2],
    /// Largest |U₀ − V₀| of the unperturbed PDE solve over quoted strikes.
    baseline_pde_error: f64,
    amplitude_ratio: f64,
}

pub fn synth(cfg: &RunConfig) -> Result<Status> {
    cfg.validate(Command::Synth)?;
    let params = cfg.model_params()?;
    let grid = cfg.grid_for(&params)?;
    let setup = &cfg.synth;
    let pair = match &setup.perturbation.file {
        Some(path) => PerturbationPair::sample(&grid, &TablePerturbation::load(path, grid.b())?),
        None => PerturbationPair::sample(
            &grid,
            &BumpPerturbation::new(grid.b(), setup.perturbation.bumps.clone())?,
        ),
    };
    let out = synth_quotes(
        &pair,
        &params,
        &SynthConfig {
            strike_span: setup.strike_span,
            noise: setup.noise,
            forward: setup.forward,
        },
    )?;
    let dir = cfg.out_dir();
    write_quotes_csv(create(&dir, "quotes.csv")?, &out.slices)?;
    write_quotes_json(
        create(&dir, "quotes.json")?,
        &out.slices,
        Some(&MarketParams::from(&params)),
    )?;
    write_perturbation(&dir, "ground_truth.csv", &pair, &params)?;
    let manifest = SynthManifest {
        config: cfg,
        params,
        grid_nodes: grid.len(),
        half_width: grid.half_width(),
        quotes_csv: "quotes.csv",
        quotes_json: "quotes.json",
        ground_truth: "ground_truth.csv",
        quote_counts: [out.slices[0].len(), out.slices[1].len()],
        baseline_pde_error: out.baseline_pde_error,
        amplitude_ratio: pair.amplitude_ratio(&params),
    };
    write_json(&dir, "manifest.json", &manifest)?;
    println!(
        "wrote {} + {} quotes to {} (baseline PDE error {:.3e})",
        manifest.quote_counts[0],
        manifest.quote_counts[1],
        dir.display(),
        out.baseline_pde_error
    );
    Ok(Status::Success)
}

#[derive(Serialize)]
struct Refusal<'a> {
    config: &'a RunConfig,
    refused: &'static str,
    uniqueness: &'a UniquenessReport,
}

#[derive(Serialize)]
struct CalibrateOutput<'a, R: Serialize> {
    config: &'a RunConfig,
    report: &'a R,
}

fn resolve_market(cfg: &RunConfig, from_file: Option<MarketParams>) -> Result<MarketParams> {
    match (cfg.market, from_file) {
        (Some(a), Some(b)) if a != b => Err(VolcalError::Config(
            "market constants in the config contradict those in the quote file".into(),
        )),
        (Some(m), _) | (None, Some(m)) => Ok(m),
        (None, None) => Err(VolcalError::Config(
            "no market constants: add a \"market\" block or use a JSON quote file with \"params\"".into(),
        )),
    }
}

pub fn calibrate_cmd(cfg: &RunConfig) -> Result<Status> {
    cfg.validate(Command::Calibrate)?;
    let path: PathBuf = cfg.quotes.clone().expect("validated");
    let set = load_quotes(&path, None)?;
    let market = resolve_market(cfg, set.market)?;
    let dir = cfg.out_dir();
    let cal = match calibrate(&set, &market, &cfg.calibration()) {
        Ok(c) => c,
        Err(VolcalError::ContractionViolated(report)) => {
            write_json(
                &dir,
                "refusal.json",
                &Refusal {
                    config: cfg,
                    refused: "uniqueness condition fails; rerun with --force to solve anyway",
                    uniqueness: &report,
                },
            )?;
            print_uniqueness(&report);
            return Err(VolcalError::ContractionViolated(report));
        }
        Err(e) => return Err(e),
    };
    let params = cal.params;
    let y = cal.grid.nodes();
    write_columns(
        create(&dir, "perturbation.csv")?,
        &["y", "f0", "f1"],
        &[&y, &cal.pair.f0, &cal.pair.f1],
    )?;
    let original = cal.pair.to_original(&params);
    let s: Vec<f64> = original.iter().map(|r| r.0).collect();
    let f0s: Vec<f64> = original.iter().map(|r| r.1).collect();
    let f1s: Vec<f64> = original.iter().map(|r| r.2).collect();
    write_columns(
        create(&dir, "original.csv")?,
        &["s", "f0_star", "f1_star"],
        &[&s, &f0s, &f1s],
    )?;
    let times = if cfg.times.is_empty() {
        vec![params.t1, params.t2]
    } else {
        cfg.times.clone()
    };
    let slices: Vec<Vec<f64>> = times
        .iter()
        .map(|&t| cal.local_vol_slice(t).into_iter().map(|(_, v)| v).collect())
        .collect();
    let names: Vec<String> = std::iter::once("s".to_string())
        .chain(times.iter().map(|t| format!("sigma_t{t}")))
        .collect();
    let mut columns: Vec<&[f64]> = vec![&s];
    columns.extend(slices.iter().map(|c| c.as_slice()));
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    write_columns(create(&dir, "local_vol.csv")?, &name_refs, &columns)?;
    write_json(
        &dir,
        "report.json",
        &CalibrateOutput {
            config: cfg,
            report: &cal.report,
        },
    )?;
    let r = &cal.report;
    println!(
        "{:?}: sigma0 {:.6} ({}), rho {:.4}, |f0| {:.3e}, |f1| {:.3e}, residual {:.2e}{}",
        r.method,
        r.sigma0,
        if r.sigma0_implied { "implied" } else { "fixed" },
        r.uniqueness.rho_hat,
        r.f0_sup,
        r.f1_sup,
        r.system_residual,
        r.iterations.map_or(String::new(), |n| format!(", {n} iterations"))
    );
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    Ok(Status::Success)
}

fn print_uniqueness(r: &UniquenessReport) {
    println!("tau1 {}  tau2 {}  sigma0 {}  b {}", r.tau1, r.tau2, r.sigma0, r.b);
    println!("  margin 1   {:+.6}", r.margin1);
    println!("  margin 2   {:+.6}", r.margin2);
    println!("  rho_hat    {:.6}", r.rho_hat);
    println!(
        "  |A_j1|     {:.4e} {:.4e}  (bounds {:.4e} {:.4e})",
        r.a1_norms[0], r.a1_norms[1], r.a1_bounds[0], r.a1_bounds[1]
    );
    println!(
        "  |A_j2|     {:.4e} {:.4e}  (bounds {:.4e} {:.4e})",
        r.a2_norms[0], r.a2_norms[1], r.a2_bounds[0], r.a2_bounds[1]
    );
    println!("  verdict    {}", r.verdict());
}

#[derive(Serialize)]
struct CheckOutput<'a> {
    config: &'a RunConfig,
    uniqueness: &'a UniquenessReport,
}

pub fn check(cfg: &RunConfig) -> Result<Status> {
    cfg.validate(Command::Check)?;
    let params = cfg.model_params()?;
    let grid = cfg.grid_for(&params)?;
    let report = check_uniqueness(params.tau1(), params.tau2(), params.sigma0, &grid)?;
    print_uniqueness(&report);
    let dir = cfg.out_dir();
    write_json(
        &dir,
        "check.json",
        &CheckOutput {
            config: cfg,
            uniqueness: &report,
        },
    )?;
    if let Some(sweep) = cfg.sweep {
        let bs: Vec<f64> = (0..sweep.count)
            .map(|k| sweep.b_min + (sweep.b_max - sweep.b_min) * k as f64 / (sweep.count - 1) as f64)
            .collect();
        let rows: Vec<(f64, f64, f64)> = bs
            .iter()
            .map(|&b| {
                let (m1, m2) = analytic_margins(params.tau1(), params.tau2(), params.sigma0, b);
                let half = Grid::default_half_width(b, params.sigma0, params.tau2());
                let g = Grid::new(b, half, cfg.grid.n)?;
                let rho = check_uniqueness(params.tau1(), params.tau2(), params.sigma0, &g)?.rho_hat;
                Ok((m1, m2, rho))
            })
            .collect::<Result<_>>()?;
        let m1: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let m2: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let rho: Vec<f64> = rows.iter().map(|r| r.2).collect();
        write_columns(
            create(&dir, "sweep.csv")?,
            &["b", "margin1", "margin2", "rho_hat"],
            &[&bs, &m1, &m2, &rho],
        )?;
    }
    Ok(if report.passes() {
        Status::Success
    } else {
        Status::ConditionFailed
    })
}

#[derive(Serialize)]
struct KernelTable {
    tau: f64,
    file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_oracle_deviation: Option<f64>,
}

#[derive(Serialize)]
struct KernelsOutput<'a> {
    config: &'a RunConfig,
    tables: Vec<KernelTable>,
}

fn relative_deviation(closed: f64, oracle: f64) -> f64 {
    if oracle == 0.0 {
        closed.abs()
    } else {
        (closed / oracle - 1.0).abs()
    }
}

pub fn kernels(cfg: &RunConfig) -> Result<Status> {
    cfg.validate(Command::Kernels)?;
    let params = cfg.model_params()?;
    let table = &cfg.kernels;
    let axis: Vec<f64> = (0..table.points)
        .map(|k| -table.extent + 2.0 * table.extent * k as f64 / (table.points - 1) as f64)
        .collect();
    let dir = cfg.out_dir();
    let mut tables = Vec::with_capacity(table.taus.len());
    for &tau in &table.taus {
        let kp = KernelParams::new(params.s_star, params.sigma0, tau)?;
        let rows: Vec<[f64; 6]> = axis
            .par_iter()
            .flat_map_iter(|&x| axis.iter().map(move |&y| (x, y)))
            .map(|(x, y)| {
                let (k0, k1) = (kernel_k0(x, y, &kp), kernel_k1(x, y, &kp));
                let (d0, d1) = if table.oracle {
                    (
                        relative_deviation(k0, kernel_quadrature_oracle(x, y, &kp, 0)?),
                        relative_deviation(k1, kernel_quadrature_oracle(x, y, &kp, 1)?),
                    )
                } else {
                    (0.0, 0.0)
                };
                Ok([x, y, k0, k1, d0, d1])
            })
            .collect::<Result<_>>()?;
        let column = |i: usize| rows.iter().map(|r| r[i]).collect::<Vec<f64>>();
        let cols: Vec<Vec<f64>> = (0..6).map(column).collect();
        let file = format!("kernels_tau{tau}.csv");
        let max_dev = table
            .oracle
            .then(|| cols[4].iter().chain(&cols[5]).fold(0.0f64, |a, &b| a.max(b)));
        if table.oracle {
            write_columns(
                create(&dir, &file)?,
                &["x", "y", "k0", "k1", "k0_oracle_dev", "k1_oracle_dev"],
                &[&cols[0], &cols[1], &cols[2], &cols[3], &cols[4], &cols[5]],
            )?;
        } else {
            write_columns(
                create(&dir, &file)?,
                &["x", "y", "k0", "k1"],
                &[&cols[0], &cols[1], &cols[2], &cols[3]],
            )?;
        }
        match max_dev {
            Some(d) => println!("tau {tau}: {file}, max oracle deviation {d:.3e}"),
            None => println!("tau {tau}: {file}"),
        }
        tables.push(KernelTable {
            tau,
            file,
            max_oracle_deviation: max_dev,
        });
    }
    write_json(&dir, "kernels.json", &KernelsOutput { config: cfg, tables })?;
    Ok(Status::Success)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_interpolates_and_vanishes_outside() {
        let t = TablePerturbation {
            b: 0.1,
            y: vec![-0.05, 0.0, 0.05],
            f0: vec![0.0, 2.0, 0.0],
            f1: vec![0.0, -1.0, 0.0],
        };
        assert_eq!(t.f0(-0.025), 1.0);
        assert_eq!(t.f1(0.025), -0.5);
        assert_eq!(t.f0(0.07), 0.0);
        assert_eq!(t.breakpoints(), vec![-0.05, 0.0, 0.05]);
    }

    #[test]
    fn market_conflicts_are_refused() {
        let m = MarketParams {
            s_star: 1.0,
            t_star: 0.0,
            r: 0.0,
            mu: 0.0,
            t1: 0.25,
            t2: 0.5,
        };
        let cfg = RunConfig {
            market: Some(m),
            ..Default::default()
        };
        assert_eq!(resolve_market(&cfg, Some(m)).unwrap(), m);
        assert!(resolve_market(&cfg, Some(MarketParams { r: 0.01, ..m })).is_err());
        assert!(resolve_market(&RunConfig::default(), None).is_err());
    }
}
