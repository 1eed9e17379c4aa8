//! End-to-end workflow on CSV files with the shape of the lip/EMG study:
//! 0.64 s horizon, 20 subdivisions. The curves are simulated and written to a
//! scratch directory first, then everything runs from the files.
//!
//! ```text
//! cargo run --release --example real_data_workflow -- [out_dir]
//! ```

use std::path::PathBuf;

use histfun::design::{FunctionalSample, SampleRole};
use histfun::estimator::{bootstrap_delta_ci, BootstrapOptions, EstimatorOptions, HistoricalProblem};
use histfun::simulation::{simulate, Scenario, SimulationConfig};
use histfun::tuning::{grid_search, TuningGrid};

fn main() -> histfun::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HISTFUN_LOG", "warn")).init();
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("histfun_workflow"));
    std::fs::create_dir_all(&dir)?;

    let horizon = 0.64;
    let scenario = Scenario::on_horizon(2, 0.352, 0.02, horizon, 5)?;
    let config = SimulationConfig {
        subjects: 32,
        grid_points: 65,
        sigma: 0.3,
        ..SimulationConfig::default()
    };
    let data = simulate(&scenario, &config, 5)?;
    data.x.write_csv(dir.join("x.csv"))?;
    data.y.write_csv(dir.join("y.csv"))?;

    let x = FunctionalSample::read_csv(dir.join("x.csv"), SampleRole::Covariate)?;
    let y = FunctionalSample::read_csv(dir.join("y.csv"), SampleRole::Response)?;
    let options = EstimatorOptions {
        subdivisions: 20,
        ..EstimatorOptions::default()
    };
    let problem = HistoricalProblem::new(&x, &y, options)?;
    println!("{} subjects, {} grid points, {} basis functions", problem.subjects(), x.grid().len(), problem.mesh.node_count());

    let tuned = grid_search(&problem, &TuningGrid::default())?;
    let fit = &tuned.fit;
    println!("selected lambda {:.2e}, omega {:.1e}", tuned.best.lambda, tuned.best.omega.horizontal);
    println!("lag {:.3} s (truth {}), df {:.1}, bic {:.2}", fit.delta_hat, scenario.delta, fit.df, fit.bic);

    let boot = bootstrap_delta_ci(&problem, fit, &BootstrapOptions { replications: 100, ..BootstrapOptions::default() })?;
    println!("95% bootstrap interval [{:.3}, {:.3}]", boot.ci.lower, boot.ci.upper);

    let predicted = fit.predict(&x)?;
    let residual: f64 = (predicted.values() - y.values()).iter().map(|r| r * r).sum::<f64>() / y.values().len() as f64;
    println!("in-sample mean squared error {residual:.4}");

    std::fs::write(dir.join("fit.json"), serde_json::to_string_pretty(&fit.to_json())?)?;
    println!("wrote {}", dir.join("fit.json").display());
    Ok(())
}
