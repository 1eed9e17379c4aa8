//! Batch command line: `simulate`, `fit`, `tune`, `bootstrap` and `report`.
//!
//! Every command is a pure function of its inputs, flags and seed. Failures
//! are reported on stderr as one JSON object `{"error": kind, "message": ...}`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::design::{FunctionalSample, SampleRole};
use crate::error::{Error, Result};
use crate::estimator::{
    bootstrap_delta_ci, BootstrapOptions, EstimatorOptions, FitJson, FitResult, HistoricalProblem, LagConvention,
    TuningParams, WeightScheme,
};
use crate::mesh::{CoefficientSurface, TriangularMesh};
use crate::penalties::Omega;
use crate::simulation::{
    evaluate, simulate, write_metrics_csv, CovariateParams, Scenario, SimulationConfig, RISE_POINTS,
};
use crate::solver::BridgeConfig;
use crate::tuning::{grid_search, log_space, TuningGrid};

#[derive(Debug, Parser)]
#[command(name = "histfun", version, about = "Historical functional regression with an unknown lag")]
pub struct Cli {
    /// Worker threads for tuning, bootstrap and report (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate covariates and responses: x.csv, y.csv, truth.json.
    Simulate(SimulateArgs),
    /// Fit one model, or select it by BIC when --lambda is absent: fit.json, beta_grid.csv.
    Fit(FitArgs),
    /// BIC grid search: tuning.csv plus the selected fit.
    Tune(FitArgs),
    /// Residual bootstrap interval for the lag: ci.json, deltas.csv.
    Bootstrap(BootstrapArgs),
    /// Aggregate replicate fits against a truth file: metrics.csv, metrics.json.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 1)]
    pub scenario: u8,
    #[arg(long = "N", default_value_t = 32)]
    pub n: usize,
    /// Observation grid points per curve.
    #[arg(long, default_value_t = 65)]
    pub grid_points: usize,
    #[arg(long = "T", default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long = "in-x")]
    pub in_x: PathBuf,
    #[arg(long = "in-y")]
    pub in_y: PathBuf,
    #[arg(long = "M", default_value_t = 10)]
    pub m: usize,
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    /// `verbatim` reports j*Delta for a dead A_j, `lower_edge` reports (j-1)*Delta.
    #[arg(long, default_value = "verbatim", value_parser = parse_convention)]
    pub convention: LagConvention,
    /// Use simple group weights instead of adaptive ones.
    #[arg(long)]
    pub simple_weights: bool,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Fixed bridge level; without it the grids are searched by BIC.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Fixed smoothness weight: one value (tied) or `h,v,p`.
    #[arg(long, value_parser = parse_omega)]
    pub omega: Option<Omega>,
    /// Comma list, or `lo:hi:count` in log10 units.
    #[arg(long = "lambda-grid", default_value = "-4:1:8", allow_hyphen_values = true)]
    pub lambda_grid: String,
    /// Tied weights, same syntax as --lambda-grid.
    #[arg(long = "omega-grid", default_value = "-6:-1:4", allow_hyphen_values = true)]
    pub omega_grid: String,
    /// Resolution of beta_grid.csv.
    #[arg(long, default_value_t = 101)]
    pub grid_points: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BootstrapArgs {
    #[arg(long = "in-x")]
    pub in_x: PathBuf,
    #[arg(long = "in-y")]
    pub in_y: PathBuf,
    /// Fit whose tuning parameters are reused (default: <out>/fit.json).
    #[arg(long)]
    pub fit: Option<PathBuf>,
    #[arg(long = "B", default_value_t = 200)]
    pub b: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// truth.json written by `simulate`.
    #[arg(long)]
    pub truth: PathBuf,
    /// Replicate fit.json files.
    #[arg(long, num_args = 1.., required = true)]
    pub fits: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_convention(s: &str) -> std::result::Result<LagConvention, String> {
    match s {
        "verbatim" => Ok(LagConvention::Verbatim),
        "lower_edge" | "lower-edge" => Ok(LagConvention::LowerEdge),
        _ => Err(format!("unknown convention `{s}` (expected verbatim or lower_edge)")),
    }
}

fn parse_omega(s: &str) -> std::result::Result<Omega, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad weight `{p}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match v.as_slice() {
        [w] => Ok(Omega::tied(*w)),
        [h, v, p] => Ok(Omega {
            horizontal: *h,
            vertical: *v,
            diagonal: *p,
        }),
        _ => Err("expected one weight or three comma-separated weights".into()),
    }
}

/// Parses `a,b,c` or `lo:hi:count` (log10 exponents).
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = |m: String| Error::Parse(format!("grid `{spec}`: {m}"));
    let values = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected lo:hi:count".into()));
        }
        let lo: f64 = parts[0].trim().parse().map_err(|e| bad(format!("{e}")))?;
        let hi: f64 = parts[1].trim().parse().map_err(|e| bad(format!("{e}")))?;
        let count: usize = parts[2].trim().parse().map_err(|e| bad(format!("{e}")))?;
        if count == 0 {
            return Err(bad("count must be positive".into()));
        }
        log_space(lo, hi, count)
    } else {
        spec.split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| bad(format!("`{p}`: {e}"))))
            .collect::<Result<Vec<f64>>>()?
    };
    if values.is_empty() || values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(bad("values must be finite and nonnegative".into()));
    }
    Ok(values)
}

/// Contents of truth.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub scenario: Scenario,
    pub subjects: usize,
    pub grid_points: usize,
    pub sigma: f64,
    pub seed: u64,
    pub covariates: CovariateParams,
}

fn ensure_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("input file {} does not exist", path.display()),
        )));
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn estimator_options(model: &ModelArgs) -> EstimatorOptions {
    EstimatorOptions {
        subdivisions: model.m,
        bridge: BridgeConfig {
            gamma: model.gamma,
            ..BridgeConfig::default()
        },
        weights: if model.simple_weights {
            WeightScheme::Simple
        } else {
            WeightScheme::Adaptive
        },
        convention: model.convention,
        ..EstimatorOptions::default()
    }
}

fn load_problem(in_x: &Path, in_y: &Path, options: EstimatorOptions) -> Result<HistoricalProblem> {
    let x = FunctionalSample::read_csv(in_x, SampleRole::Covariate)?;
    let y = FunctionalSample::read_csv(in_y, SampleRole::Response)?;
    HistoricalProblem::new(&x, &y, options)
}

/// Writes fit.json, beta_grid.csv, fit_log.jsonl and mesh.json into `out`.
pub fn write_fit_artifacts(fit: &FitResult, out: &Path, grid_points: usize) -> Result<()> {
    write_json(&out.join("fit.json"), &fit.to_json())?;
    let mut w = csv::Writer::from_path(out.join("beta_grid.csv"))?;
    w.write_record(["s", "t", "beta"])?;
    for (s, t, v) in fit.beta_hat.dense_grid(grid_points) {
        w.write_record([format!("{s:?}"), format!("{t:?}"), format!("{v:?}")])?;
    }
    w.flush()?;
    let mut log = fs::File::create(out.join("fit_log.jsonl"))?;
    for record in &fit.fit_log {
        writeln!(log, "{}", serde_json::to_string(record)?)?;
    }
    write_json(&out.join("mesh.json"), &fit.beta_hat.mesh().to_json())?;
    Ok(())
}

fn run_simulate(a: &SimulateArgs) -> Result<()> {
    fs::create_dir_all(&a.out)?;
    let scenario = Scenario::on_horizon(a.scenario, a.delta, a.epsilon, a.horizon, a.seed)?;
    let config = SimulationConfig {
        subjects: a.n,
        grid_points: a.grid_points,
        sigma: a.sigma,
        covariates: CovariateParams::default(),
    };
    let data = simulate(&scenario, &config, a.seed)?;
    data.x.write_csv(a.out.join("x.csv"))?;
    data.y.write_csv(a.out.join("y.csv"))?;
    write_json(
        &a.out.join("truth.json"),
        &Truth {
            scenario,
            subjects: a.n,
            grid_points: a.grid_points,
            sigma: a.sigma,
            seed: a.seed,
            covariates: config.covariates,
        },
    )
}

fn run_fit(a: &FitArgs, tune: bool) -> Result<()> {
    ensure_file(&a.model.in_x)?;
    ensure_file(&a.model.in_y)?;
    fs::create_dir_all(&a.out)?;
    let lambdas = parse_grid(&a.lambda_grid)?;
    let omegas: Vec<Omega> = parse_grid(&a.omega_grid)?.into_iter().map(Omega::tied).collect();
    let problem = load_problem(&a.model.in_x, &a.model.in_y, estimator_options(&a.model))?;
    let fit = match (tune, a.lambda) {
        (false, Some(lambda)) => problem.fit(&TuningParams {
            lambda,
            omega: a.omega.unwrap_or(omegas[0]),
        })?,
        _ => {
            let grid = TuningGrid::new(
                a.lambda.map_or(lambdas, |l| vec![l]),
                a.omega.map_or(omegas, |o| vec![o]),
            );
            let outcome = grid_search(&problem, &grid)?;
            if tune {
                outcome.grid.write_csv(a.out.join("tuning.csv"))?;
            }
            outcome.fit
        }
    };
    write_fit_artifacts(&fit, &a.out, a.grid_points)
}

/// Contents of ci.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiReport {
    pub delta_hat: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub replications: usize,
    pub failures: usize,
    pub seed: u64,
}

fn run_bootstrap(a: &BootstrapArgs) -> Result<()> {
    ensure_file(&a.in_x)?;
    ensure_file(&a.in_y)?;
    let fit_path = a.fit.clone().unwrap_or_else(|| a.out.join("fit.json"));
    ensure_file(&fit_path)?;
    fs::create_dir_all(&a.out)?;
    let saved: FitJson = read_json(&fit_path)?;
    let options = EstimatorOptions {
        subdivisions: saved.m,
        bridge: BridgeConfig {
            gamma: saved.gamma,
            ..BridgeConfig::default()
        },
        convention: saved.convention,
        ..EstimatorOptions::default()
    };
    let problem = load_problem(&a.in_x, &a.in_y, options)?;
    let fit = problem.fit(&TuningParams {
        lambda: saved.lambda,
        omega: saved.omega,
    })?;
    let boot = bootstrap_delta_ci(
        &problem,
        &fit,
        &BootstrapOptions {
            replications: a.b,
            level: a.level,
            seed: a.seed,
        },
    )?;
    write_json(
        &a.out.join("ci.json"),
        &CiReport {
            delta_hat: fit.delta_hat,
            lower: boot.ci.lower,
            upper: boot.ci.upper,
            level: boot.ci.level,
            replications: boot.replications,
            failures: boot.failures,
            seed: a.seed,
        },
    )?;
    let mut w = csv::Writer::from_path(a.out.join("deltas.csv"))?;
    w.write_record(["replicate", "delta_hat"])?;
    for (r, d) in boot.deltas.iter().enumerate() {
        w.write_record([r.to_string(), format!("{d:?}")])?;
    }
    w.flush()?;
    Ok(())
}

fn run_report(a: &ReportArgs) -> Result<()> {
    ensure_file(&a.truth)?;
    for f in &a.fits {
        ensure_file(f)?;
    }
    fs::create_dir_all(&a.out)?;
    let truth: Truth = read_json(&a.truth)?;
    let fits = a
        .fits
        .iter()
        .map(|path| {
            let saved: FitJson = read_json(path)?;
            let mesh = TriangularMesh::new(saved.m, saved.t)?;
            Ok((saved.delta_hat, CoefficientSurface::new(mesh, saved.b)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let report = evaluate(&fits, &truth.scenario, RISE_POINTS)?;
    write_metrics_csv(std::slice::from_ref(&report), a.out.join("metrics.csv"))?;
    write_json(&a.out.join("metrics.json"), &report)
}

/// Runs a parsed command line.
pub fn execute(cli: &Cli) -> Result<()> {
    let job = || match &cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::Fit(a) => run_fit(a, false),
        Command::Tune(a) => run_fit(a, true),
        Command::Bootstrap(a) => run_bootstrap(a),
        Command::Report(a) => run_report(a),
    };
    match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(job),
        None => job(),
    }
}

fn error_json(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code: 0 on success, 1 on a failed run, 2 on bad usage.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!("{}", error_json("usage", e.to_string().trim()));
            return 2;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_json(e.kind(), &e.to_string()));
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn grid_syntax() {
        assert_eq!(parse_grid("0.1, 2").unwrap(), vec![0.1, 2.0]);
        let g = parse_grid("-2:0:3").unwrap();
        assert_abs_diff_eq!(g[0], 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(g[2], 1.0, epsilon = 1e-15);
        assert!(parse_grid("1:2").is_err());
        assert!(parse_grid("a,b").is_err());
        assert!(parse_grid("-1").is_err());
        assert!(parse_grid("0:1:0").is_err());
    }

    #[test]
    fn omega_syntax() {
        assert_eq!(parse_omega("0.5").unwrap(), Omega::tied(0.5));
        let o = parse_omega("1,2,3").unwrap();
        assert_eq!(o.as_array(), [1.0, 2.0, 3.0]);
        assert!(parse_omega("1,2").is_err());
    }

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(run(["histfun", "simulate", "--bogus"]), 2);
        assert_eq!(run(["histfun", "frobnicate"]), 2);
        // seed is mandatory for stochastic commands
        assert_eq!(run(["histfun", "simulate", "--out", "/tmp/x"]), 2);
    }

    #[test]
    fn missing_inputs_fail_before_compute() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("o");
        let code = run([
            "histfun",
            "fit",
            "--in-x",
            "/nonexistent/x.csv",
            "--in-y",
            "/nonexistent/y.csv",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 1);
        assert!(!out.exists());
    }
}
