//! Replicated simulation study over the three benchmark surfaces, printing a
//! Table-1 style summary.
//!
//! ```text
//! cargo run --release --example simulation_study -- [replications] [M] [verbatim|lower_edge]
//! ```

use histfun::estimator::{EstimatorOptions, HistoricalProblem, LagConvention};
use histfun::simulation::{evaluate, replicate, Scenario, SimulationConfig, RISE_POINTS};
use histfun::tuning::{grid_search, TuningGrid};

fn main() -> histfun::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HISTFUN_LOG", "warn")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let replications: usize = args.first().and_then(|a| a.parse().ok()).unwrap_or(20);
    let m: usize = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(10);
    let convention = match args.get(2).map(String::as_str) {
        Some("verbatim") => LagConvention::Verbatim,
        _ => LagConvention::LowerEdge,
    };
    let config = SimulationConfig::default();
    let options = EstimatorOptions {
        subdivisions: m,
        convention,
        ..EstimatorOptions::default()
    };
    println!("N={} M={m} sigma={} convention={convention:?}", config.subjects, config.sigma);
    println!("scenario  rmse     %bias    sd       rise (sd)");
    for id in 1..=3u8 {
        let scenario = Scenario::from_id(id, 0.5, 0.05, 2024)?;
        let started = std::time::Instant::now();
        let fits = replicate(&scenario, &config, replications, 1000, |data| {
            let problem = HistoricalProblem::new(&data.x, &data.y, options.clone())?;
            let out = grid_search(&problem, &TuningGrid::default())?;
            Ok((out.fit.delta_hat, out.fit.beta_hat))
        });
        let fits: Vec<_> = fits.into_iter().collect::<histfun::Result<_>>()?;
        let report = evaluate(&fits, &scenario, RISE_POINTS)?;
        println!(
            "{id:>8}  {:.4}  {:>7.2}  {:.4}  {:.3} ({:.3})   [{:.1}s]",
            report.rmse_delta,
            report.pct_bias_delta,
            report.sd_delta,
            report.rise_mean,
            report.rise_sd,
            started.elapsed().as_secs_f64()
        );
        let deltas: Vec<String> = report.records.iter().map(|r| format!("{:.2}", r.delta_hat)).collect();
        println!("          deltas: {}", deltas.join(" "));
    }
    Ok(())
}
