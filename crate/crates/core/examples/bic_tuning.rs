//! BIC grid search over (lambda, omega) on one simulated dataset; prints the
//! ranked candidates.
//!
//! ```text
//! cargo run --release --example bic_tuning -- [scenario] [seed]
//! ```

use histfun::estimator::{EstimatorOptions, HistoricalProblem};
use histfun::simulation::{simulate, Scenario, SimulationConfig};
use histfun::tuning::{grid_search, TuningGrid};

fn main() -> histfun::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let id: u8 = args.first().and_then(|a| a.parse().ok()).unwrap_or(2);
    let seed: u64 = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(3);

    let scenario = Scenario::from_id(id, 0.5, 0.05, seed)?;
    let data = simulate(&scenario, &SimulationConfig::default(), seed)?;
    let problem = HistoricalProblem::new(&data.x, &data.y, EstimatorOptions::default())?;
    let started = std::time::Instant::now();
    let out = grid_search(&problem, &TuningGrid::default())?;
    println!("{} candidates in {:.2}s", out.grid.records.len(), started.elapsed().as_secs_f64());
    println!("{:>10} {:>10} {:>8} {:>10} {:>10} {:>6}", "lambda", "omega", "df", "rss", "bic", "lag");
    for r in out.grid.records.iter().take(10) {
        println!(
            "{:>10.2e} {:>10.2e} {:>8.2} {:>10.3} {:>10.3} {:>6.2}",
            r.lambda, r.omega.horizontal, r.df, r.rss, r.bic, r.delta_hat
        );
    }
    println!("selected lambda {:.3e}, omega {:.1e}: lag {:.2} (truth {})", out.best.lambda, out.best.omega.horizontal, out.fit.delta_hat, scenario.delta);
    Ok(())
}
