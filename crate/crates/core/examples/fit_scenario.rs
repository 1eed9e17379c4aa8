//! Fits one simulated dataset at fixed tuning parameters and compares the
//! estimated lag and surface with the truth.
//!
//! ```text
//! cargo run --release --example fit_scenario -- [scenario] [lambda] [omega] [seed]
//! ```

use histfun::estimator::{EstimatorOptions, HistoricalProblem, LagConvention, TuningParams};
use histfun::penalties::Omega;
use histfun::simulation::{rise, simulate, Scenario, SimulationConfig, RISE_POINTS};

fn main() -> histfun::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HISTFUN_LOG", "warn")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let id: u8 = args.first().and_then(|a| a.parse().ok()).unwrap_or(1);
    let lambda: f64 = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(0.5);
    let omega: f64 = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(1e-3);
    let seed: u64 = args.get(3).and_then(|a| a.parse().ok()).unwrap_or(1);

    let scenario = Scenario::from_id(id, 0.5, 0.05, seed)?;
    let data = simulate(&scenario, &SimulationConfig::default(), seed)?;
    let options = EstimatorOptions {
        convention: LagConvention::LowerEdge,
        ..EstimatorOptions::default()
    };
    let problem = HistoricalProblem::new(&data.x, &data.y, options)?;
    let fit = problem.fit(&TuningParams {
        lambda,
        omega: Omega::tied(omega),
    })?;

    println!("scenario {id}: true lag {}  estimated {:.3}  (first dead group {:?})", scenario.delta, fit.delta_hat, fit.dead_group);
    println!("outer iterations {}  objective {:.4} -> {:.4}", fit.objective_trace.len(), fit.objective_trace[0], fit.objective_trace.last().unwrap());
    println!("df {:.2}  rss {:.3}  bic {:.3}", fit.df, fit.rss, fit.bic);
    println!("RISE {:.3}", rise(&fit.beta_hat, &scenario, RISE_POINTS));
    for t in [0.25, 0.5, 0.75, 1.0] {
        let row: Vec<String> = (0..=4)
            .map(|q| q as f64 * t / 4.0)
            .map(|s| format!("{:>6.2}/{:<6.2}", fit.beta_hat.eval(s, t).unwrap_or(f64::NAN), scenario.true_beta(s, t)))
            .collect();
        println!("  t={t:.2}  fitted/true: {}", row.join(" "));
    }
    Ok(())
}
