//! Residual bootstrap interval for the lag after BIC tuning.
//!
//! ```text
//! cargo run --release --example bootstrap_lag_ci -- [B] [seed]
//! ```

use histfun::estimator::{bootstrap_delta_ci, BootstrapOptions, EstimatorOptions, HistoricalProblem, LagConvention};
use histfun::simulation::{simulate, Scenario, SimulationConfig};
use histfun::tuning::{grid_search, TuningGrid};

fn main() -> histfun::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let replications: usize = args.first().and_then(|a| a.parse().ok()).unwrap_or(200);
    let seed: u64 = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(1);

    let scenario = Scenario::sharp_edge(0.5, 0.05)?;
    let data = simulate(&scenario, &SimulationConfig::default(), 7)?;
    let options = EstimatorOptions {
        convention: LagConvention::LowerEdge,
        ..EstimatorOptions::default()
    };
    let problem = HistoricalProblem::new(&data.x, &data.y, options)?;
    let tuned = grid_search(&problem, &TuningGrid::default())?;
    let boot = bootstrap_delta_ci(
        &problem,
        &tuned.fit,
        &BootstrapOptions {
            replications,
            level: 0.95,
            seed,
        },
    )?;

    let mut counts = std::collections::BTreeMap::new();
    for d in &boot.deltas {
        *counts.entry(format!("{d:.2}")).or_insert(0usize) += 1;
    }
    println!("lag {:.2}, {:.0}% interval [{:.2}, {:.2}], {} failed of {}", tuned.fit.delta_hat, 100.0 * boot.ci.level, boot.ci.lower, boot.ci.upper, boot.failures, boot.replications);
    println!("bootstrap lags: {counts:?}");
    Ok(())
}
