//! Synthetic data for the three benchmark surfaces and replication metrics.
//!
//! Responses are generated by Simpson quadrature against the analytic surface
//! on a fine grid. Nothing here goes through the finite-element design code,
//! so a bug in the estimator's integrals cannot cancel out in a simulation.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{FunctionalSample, SampleRole};
use crate::error::{Error, Result};
use crate::mesh::CoefficientSurface;

/// A disk where the Scenario 3 surface is set to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hole {
    pub s: f64,
    pub t: f64,
    pub radius: f64,
}

impl Hole {
    fn contains(&self, s: f64, t: f64) -> bool {
        (s - self.s).powi(2) + (t - self.t).powi(2) <= self.radius * self.radius
    }
}

/// Random hole layout for Scenario 3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoleConfig {
    pub count: usize,
    pub min_radius: f64,
    pub max_radius: f64,
}

impl Default for HoleConfig {
    fn default() -> Self {
        // one to two lattice steps of a ten-subdivision mesh on [0, 1]
        Self {
            count: 3,
            min_radius: 0.1,
            max_radius: 0.2,
        }
    }
}

/// True coefficient surface of a simulation scenario.
///
/// * Scenario 1: `amplitude` on `t - s <= delta - epsilon`, then a linear drop
///   to zero at `t - s = delta`.
/// * Scenario 2: `amplitude * (1 - (t - s) / delta)` on `t - s <= delta`.
/// * Scenario 3: Scenario 2 with zero disks strictly inside `t - s < delta - epsilon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: u8,
    pub delta: f64,
    pub epsilon: f64,
    pub holes: Vec<Hole>,
    pub amplitude: f64,
    pub horizon: f64,
}

impl Scenario {
    fn base(id: u8, delta: f64, epsilon: f64, horizon: f64) -> Result<Self> {
        let s = Self {
            id,
            delta,
            epsilon,
            holes: Vec::new(),
            amplitude: 10.0,
            horizon,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn sharp_edge(delta: f64, epsilon: f64) -> Result<Self> {
        Self::base(1, delta, epsilon, 1.0)
    }

    pub fn linear(delta: f64, epsilon: f64) -> Result<Self> {
        Self::base(2, delta, epsilon, 1.0)
    }

    /// Scenario 2 with `config.count` holes drawn from `seed`.
    pub fn with_holes(delta: f64, epsilon: f64, config: HoleConfig, seed: u64) -> Result<Self> {
        Self::base(3, delta, epsilon, 1.0)?.add_holes(config, seed)
    }

    fn add_holes(mut self, config: HoleConfig, seed: u64) -> Result<Self> {
        if !(config.min_radius > 0.0 && config.max_radius >= config.min_radius) {
            return Err(Error::InvalidConfig("hole radii must be positive and ordered".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let limit = self.delta - self.epsilon;
        for _ in 0..config.count {
            let mut placed = None;
            for _ in 0..100_000 {
                let radius = rng.gen_range(config.min_radius..=config.max_radius);
                let cs = rng.gen_range(0.0..self.horizon);
                let ct = rng.gen_range(cs..=self.horizon);
                // the whole disk stays on the far side of t - s = delta - epsilon
                if (limit - (ct - cs)) / std::f64::consts::SQRT_2 > radius {
                    placed = Some(Hole { s: cs, t: ct, radius });
                    break;
                }
            }
            self.holes.push(placed.ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "cannot fit a hole of radius >= {} inside the band t - s < {limit}",
                    config.min_radius
                ))
            })?);
        }
        Ok(self)
    }

    /// Scenario by number on `[0, 1]` with the default hole layout.
    pub fn from_id(id: u8, delta: f64, epsilon: f64, seed: u64) -> Result<Self> {
        Self::on_horizon(id, delta, epsilon, 1.0, seed)
    }

    /// Scenario by number on `[0, horizon]`. Hole radii scale with the horizon.
    pub fn on_horizon(id: u8, delta: f64, epsilon: f64, horizon: f64, seed: u64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidConfig(format!("horizon must be positive, got {horizon}")));
        }
        match id {
            1 | 2 => Self::base(id, delta, epsilon, horizon),
            3 => {
                let d = HoleConfig::default();
                let config = HoleConfig {
                    min_radius: d.min_radius * horizon,
                    max_radius: d.max_radius * horizon,
                    ..d
                };
                Self::base(3, delta, epsilon, horizon)?.add_holes(config, seed)
            }
            _ => Err(Error::InvalidConfig(format!("scenario must be 1, 2 or 3, got {id}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= self.horizon) {
            return Err(Error::InvalidConfig(format!(
                "lag must lie in (0, {}], got {}",
                self.horizon, self.delta
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < self.delta) {
            return Err(Error::InvalidConfig(format!(
                "ramp width must lie in (0, delta), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// `beta(s, t)`; zero outside `0 <= s <= t` and beyond the lag.
    pub fn true_beta(&self, s: f64, t: f64) -> f64 {
        let lag = t - s;
        if s < 0.0 || lag < 0.0 || lag > self.delta {
            return 0.0;
        }
        match self.id {
            1 => {
                if lag <= self.delta - self.epsilon {
                    self.amplitude
                } else {
                    self.amplitude * (self.delta - lag) / self.epsilon
                }
            }
            _ => {
                if self.holes.iter().any(|h| h.contains(s, t)) {
                    0.0
                } else {
                    self.amplitude * (1.0 - lag / self.delta)
                }
            }
        }
    }
}

/// Shape of the random smooth covariate curves.
///
/// Each curve is `level * z0 + trend * z1 * t / T + sum_h amplitude * u_h / h^decay
/// * sin(2 pi h t / T + phase_h)` with standard normal `z`, `u_h ~ U(-1, 1)` and
/// uniform phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovariateParams {
    pub harmonics: usize,
    pub amplitude: f64,
    pub decay: f64,
    pub level: f64,
    pub trend: f64,
}

impl Default for CovariateParams {
    fn default() -> Self {
        Self {
            harmonics: 10,
            amplitude: 2.0,
            decay: 1.0,
            level: 1.0,
            trend: 1.0,
        }
    }
}

impl CovariateParams {
    /// Upper bound on `|x(t+h) - 2x(t) + x(t-h)|` for grid spacing `h`.
    pub fn second_difference_bound(&self, horizon: f64, spacing: f64) -> f64 {
        let curvature: f64 = (1..=self.harmonics)
            .map(|h| {
                let w = 2.0 * std::f64::consts::PI * h as f64 / horizon;
                self.amplitude * (h as f64).powf(-self.decay) * w * w
            })
            .sum();
        curvature * spacing * spacing
    }
}

/// Uniform grid of `points` times on `[0, horizon]`.
pub fn uniform_grid(points: usize, horizon: f64) -> Vec<f64> {
    let last = (points.max(2) - 1) as f64;
    (0..points.max(2)).map(|q| horizon * q as f64 / last).collect()
}

pub fn gen_covariates(n: usize, grid: &[f64], params: &CovariateParams, seed: u64) -> Result<FunctionalSample> {
    if n == 0 {
        return Err(Error::InvalidConfig("need at least one curve".into()));
    }
    let horizon = *grid.last().ok_or_else(|| Error::InvalidConfig("empty grid".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut values = DMatrix::zeros(n, grid.len());
    for i in 0..n {
        let level = params.level * normal.sample(&mut rng);
        let trend = params.trend * normal.sample(&mut rng);
        let waves: Vec<(f64, f64)> = (1..=params.harmonics)
            .map(|h| {
                let a = params.amplitude * rng.gen_range(-1.0..1.0) / (h as f64).powf(params.decay);
                (a, rng.gen_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        for (q, &t) in grid.iter().enumerate() {
            let mut v = level + trend * t / horizon;
            for (h, &(a, phase)) in waves.iter().enumerate() {
                v += a * (std::f64::consts::TAU * (h + 1) as f64 * t / horizon + phase).sin();
            }
            values[(i, q)] = v;
        }
    }
    FunctionalSample::new(grid.to_vec(), values, SampleRole::Covariate)
}

/// Number of Simpson panels used for the response integrals.
pub const RESPONSE_QUADRATURE_PANELS: usize = 2000;

fn lerp(grid: &[f64], values: &[f64], s: f64) -> f64 {
    let last = grid.len() - 1;
    if s <= grid[0] {
        return values[0];
    }
    if s >= grid[last] {
        return values[last];
    }
    let mut lo = 0;
    let mut hi = last;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if grid[mid] <= s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    values[lo] + (s - grid[lo]) / (grid[hi] - grid[lo]) * (values[hi] - values[lo])
}

/// Composite Simpson rule of `f` on `[a, b]` with an even number of panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// `int_0^t x_i(s) beta(s, t) ds` at every grid time, with `x_i` linear
/// between its grid points.
pub fn noiseless_response(x: &FunctionalSample, scenario: &Scenario) -> DMatrix<f64> {
    let grid = x.grid();
    let rows: Vec<Vec<f64>> = (0..x.curve_count())
        .into_par_iter()
        .map(|i| {
            let xi = x.curve(i);
            grid.iter()
                .map(|&t| {
                    simpson(
                        |s| lerp(grid, &xi, s) * scenario.true_beta(s, t),
                        0.0,
                        t,
                        RESPONSE_QUADRATURE_PANELS,
                    )
                })
                .collect()
        })
        .collect();
    DMatrix::from_fn(x.curve_count(), grid.len(), |i, q| rows[i][q])
}

/// Noiseless response plus iid `N(0, sigma^2)` errors at every grid point.
pub fn gen_response(x: &FunctionalSample, scenario: &Scenario, sigma: f64, seed: u64) -> Result<FunctionalSample> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidConfig(format!("noise level must be nonnegative, got {sigma}")));
    }
    let mut values = noiseless_response(x, scenario);
    if sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        for i in 0..values.nrows() {
            for q in 0..values.ncols() {
                values[(i, q)] += normal.sample(&mut rng);
            }
        }
    }
    FunctionalSample::new(x.grid().to_vec(), values, SampleRole::Response)
}

/// Sample size, grid and noise for one simulated data set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub subjects: usize,
    pub grid_points: usize,
    pub sigma: f64,
    pub covariates: CovariateParams,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            subjects: 32,
            grid_points: 65,
            sigma: 0.5,
            covariates: CovariateParams::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub x: FunctionalSample,
    pub y: FunctionalSample,
}

/// Covariates and responses for one replication. The covariates and the noise
/// use independent seeds derived from `seed`.
pub fn simulate(scenario: &Scenario, config: &SimulationConfig, seed: u64) -> Result<SimulatedData> {
    let grid = uniform_grid(config.grid_points, scenario.horizon);
    let x = gen_covariates(config.subjects, &grid, &config.covariates, seed.wrapping_mul(2))?;
    let y = gen_response(&x, scenario, config.sigma, seed.wrapping_mul(2).wrapping_add(1))?;
    Ok(SimulatedData { x, y })
}

/// Root mean squared difference between a fitted and the true surface over a
/// `points x points` lattice on `[0, T]^2`, restricted to `s <= t`.
pub fn rise(surface: &CoefficientSurface, scenario: &Scenario, points: usize) -> f64 {
    let horizon = scenario.horizon;
    let grid = uniform_grid(points, horizon);
    let mut acc = 0.0;
    let mut count = 0usize;
    for &s in &grid {
        for &t in grid.iter().filter(|&&t| t >= s) {
            let fitted = surface.eval(s, t).unwrap_or(0.0);
            acc += (fitted - scenario.true_beta(s, t)).powi(2);
            count += 1;
        }
    }
    (acc / count as f64).sqrt()
}

/// One replication's estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateMetric {
    pub delta_hat: f64,
    pub rise: f64,
}

/// Lag and surface accuracy over replications.
///
/// `sd_delta` uses the `n - 1` denominator, so
/// `rmse^2 = bias^2 + (n - 1) / n * sd^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: u8,
    pub replications: usize,
    pub delta_true: f64,
    pub rmse_delta: f64,
    pub bias_delta: f64,
    pub pct_bias_delta: f64,
    pub sd_delta: f64,
    pub rise_mean: f64,
    pub rise_sd: f64,
    pub records: Vec<ReplicateMetric>,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Default lattice resolution for RISE.
pub const RISE_POINTS: usize = 101;

/// Metrics from per-replication `(delta_hat, surface)` pairs.
pub fn evaluate(fits: &[(f64, CoefficientSurface)], scenario: &Scenario, points: usize) -> Result<MetricsReport> {
    let records: Vec<ReplicateMetric> = fits
        .par_iter()
        .map(|(d, surf)| ReplicateMetric {
            delta_hat: *d,
            rise: rise(surf, scenario, points),
        })
        .collect();
    metrics_from_records(records, scenario)
}

pub fn metrics_from_records(records: Vec<ReplicateMetric>, scenario: &Scenario) -> Result<MetricsReport> {
    let n = records.len();
    if n < 2 {
        return Err(Error::InvalidConfig(format!("metrics need at least two replications, got {n}")));
    }
    let deltas: Vec<f64> = records.iter().map(|r| r.delta_hat).collect();
    let rises: Vec<f64> = records.iter().map(|r| r.rise).collect();
    let truth = scenario.delta;
    let (mean_delta, sd_delta) = mean_sd(&deltas);
    let bias = mean_delta - truth;
    let rmse = (deltas.iter().map(|d| (d - truth).powi(2)).sum::<f64>() / n as f64).sqrt();
    let (rise_mean, rise_sd) = mean_sd(&rises);
    Ok(MetricsReport {
        scenario: scenario.id,
        replications: n,
        delta_true: truth,
        rmse_delta: rmse,
        bias_delta: bias,
        pct_bias_delta: 100.0 * bias / truth,
        sd_delta,
        rise_mean,
        rise_sd,
        records,
    })
}

/// Runs `fit` on `replications` independently simulated data sets in parallel.
/// Replication `r` uses seed `base_seed + r`.
pub fn replicate<F>(
    scenario: &Scenario,
    config: &SimulationConfig,
    replications: usize,
    base_seed: u64,
    fit: F,
) -> Vec<Result<(f64, CoefficientSurface)>>
where
    F: Fn(&SimulatedData) -> Result<(f64, CoefficientSurface)> + Sync,
{
    (0..replications)
        .into_par_iter()
        .map(|r| {
            let data = simulate(scenario, config, base_seed + r as u64)?;
            fit(&data)
        })
        .collect()
}

/// Writes a Table-1 shaped CSV, one row per report.
pub fn write_metrics_csv(reports: &[MetricsReport], path: impl AsRef<std::path::Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "scenario",
        "replications",
        "delta_true",
        "rmse_delta",
        "pct_bias_delta",
        "sd_delta",
        "rise_mean",
        "rise_sd",
    ])?;
    for r in reports {
        w.write_record([
            r.scenario.to_string(),
            r.replications.to_string(),
            r.delta_true.to_string(),
            format!("{:.6}", r.rmse_delta),
            format!("{:.3}", r.pct_bias_delta),
            format!("{:.6}", r.sd_delta),
            format!("{:.4}", r.rise_mean),
            format!("{:.4}", r.rise_sd),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::TriangularMesh;
    use approx::assert_abs_diff_eq;

    #[test]
    fn scenario_two_values() {
        let sc = Scenario::linear(0.5, 0.05).unwrap();
        for s in [0.0, 0.2, 0.7] {
            assert_eq!(sc.true_beta(s, s), 10.0);
        }
        assert_abs_diff_eq!(sc.true_beta(0.1, 0.6), 0.0, epsilon = 1e-12);
        assert_eq!(sc.true_beta(0.1, 0.7), 0.0);
        assert_eq!(sc.true_beta(0.5, 0.4), 0.0);
    }

    #[test]
    fn scenario_one_values() {
        let sc = Scenario::sharp_edge(0.5, 0.05).unwrap();
        assert_eq!(sc.true_beta(0.2, 0.4), 10.0);
        assert_eq!(sc.true_beta(0.0, 0.45), 10.0);
        assert_abs_diff_eq!(sc.true_beta(0.1, 0.1 + 0.5 - 0.025), 5.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sc.true_beta(0.1, 0.6), 0.0, epsilon = 1e-9);
        assert_eq!(sc.true_beta(0.0, 0.9), 0.0);
    }

    #[test]
    fn scenario_validation() {
        assert!(Scenario::sharp_edge(0.0, 0.05).is_err());
        assert!(Scenario::sharp_edge(0.5, 0.5).is_err());
        assert!(Scenario::sharp_edge(1.5, 0.05).is_err());
        assert!(Scenario::from_id(4, 0.5, 0.05, 0).is_err());
    }

    #[test]
    fn holes_stay_inside_the_flat_band() {
        for seed in 0..50 {
            let sc = Scenario::with_holes(0.5, 0.05, HoleConfig::default(), seed).unwrap();
            assert_eq!(sc.holes.len(), 3);
            for h in &sc.holes {
                assert!(h.t >= h.s);
                assert!(h.radius >= 0.1 && h.radius <= 0.2);
                let dist = (0.45 - (h.t - h.s)) / std::f64::consts::SQRT_2;
                assert!(dist > h.radius);
                // center lies in a hole: the surface vanishes there
                assert_eq!(sc.true_beta(h.s, h.t), 0.0);
            }
        }
        let again = Scenario::with_holes(0.5, 0.05, HoleConfig::default(), 7).unwrap();
        assert_eq!(again, Scenario::with_holes(0.5, 0.05, HoleConfig::default(), 7).unwrap());
    }

    #[test]
    fn covariates_are_deterministic_and_smooth() {
        let grid = uniform_grid(65, 1.0);
        let p = CovariateParams::default();
        let a = gen_covariates(32, &grid, &p, 3).unwrap();
        let b = gen_covariates(32, &grid, &p, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.values().shape(), (32, 65));
        assert_ne!(a, gen_covariates(32, &grid, &p, 4).unwrap());
        let bound = p.second_difference_bound(1.0, grid[1]);
        for i in 0..32 {
            let c = a.curve(i);
            for q in 1..64 {
                assert!((c[q + 1] - 2.0 * c[q] + c[q - 1]).abs() <= bound);
            }
        }
    }

    #[test]
    fn zero_surface_and_zero_noise_give_zero_response() {
        let grid = uniform_grid(11, 1.0);
        let x = gen_covariates(3, &grid, &CovariateParams::default(), 1).unwrap();
        let mut sc = Scenario::linear(0.5, 0.05).unwrap();
        sc.amplitude = 0.0;
        let y = gen_response(&x, &sc, 0.0, 0).unwrap();
        assert!(y.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn response_of_unit_covariate_matches_antiderivative() {
        let grid = uniform_grid(21, 1.0);
        let x = FunctionalSample::new(grid.clone(), DMatrix::from_element(1, 21, 1.0), SampleRole::Covariate).unwrap();
        let delta = 0.5;
        let sc = Scenario::linear(delta, 0.05).unwrap();
        let y = gen_response(&x, &sc, 0.0, 0).unwrap();
        for (q, &t) in grid.iter().enumerate() {
            // int of 10 (1 - u / delta) du over u in [0, min(t, delta)]
            let u = t.min(delta);
            let exact = 10.0 * (u - u * u / (2.0 * delta));
            assert_abs_diff_eq!(y.values()[(0, q)], exact, epsilon = 1e-6);
        }
        // beyond the lag the response is the full triangle area: 10 * delta / 2
        assert_abs_diff_eq!(y.values()[(0, 20)], 2.5, epsilon = 1e-6);
    }

    #[test]
    fn noise_has_requested_variance() {
        let grid = uniform_grid(65, 1.0);
        let x = gen_covariates(40, &grid, &CovariateParams::default(), 9).unwrap();
        let sc = Scenario::sharp_edge(0.5, 0.05).unwrap();
        let clean = noiseless_response(&x, &sc);
        let noisy = gen_response(&x, &sc, 0.5, 10).unwrap();
        let diff: Vec<f64> = (noisy.values() - clean).iter().copied().collect();
        let n = diff.len() as f64;
        let mean = diff.iter().sum::<f64>() / n;
        let var = diff.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var - 0.25).abs() < 0.025, "variance {var}");
    }

    #[test]
    fn metrics_examples() {
        let sc = Scenario::sharp_edge(0.5, 0.05).unwrap();
        let exact = vec![ReplicateMetric { delta_hat: 0.5, rise: 0.0 }; 4];
        let r = metrics_from_records(exact, &sc).unwrap();
        assert_eq!((r.rmse_delta, r.bias_delta, r.sd_delta), (0.0, 0.0, 0.0));

        let h = 0.1;
        let n = 6;
        let alt: Vec<_> = (0..n)
            .map(|i| ReplicateMetric { delta_hat: if i % 2 == 0 { 0.5 + h } else { 0.5 - h }, rise: 1.0 })
            .collect();
        let r = metrics_from_records(alt, &sc).unwrap();
        assert_abs_diff_eq!(r.rmse_delta, h, epsilon = 1e-12);
        assert_abs_diff_eq!(r.bias_delta, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.sd_delta, h * (n as f64 / (n as f64 - 1.0)).sqrt(), epsilon = 1e-12);
        assert!(metrics_from_records(vec![ReplicateMetric { delta_hat: 0.5, rise: 0.0 }], &sc).is_err());
    }

    #[test]
    fn rmse_decomposition_holds() {
        let sc = Scenario::linear(0.5, 0.05).unwrap();
        let records: Vec<_> = [0.3, 0.5, 0.6, 0.6, 0.4, 0.7, 0.5]
            .iter()
            .map(|&d| ReplicateMetric { delta_hat: d, rise: 0.0 })
            .collect();
        let n = records.len() as f64;
        let r = metrics_from_records(records, &sc).unwrap();
        let rhs = r.bias_delta.powi(2) + (n - 1.0) / n * r.sd_delta.powi(2);
        assert_abs_diff_eq!(r.rmse_delta.powi(2), rhs, epsilon = 1e-12);
    }

    #[test]
    fn rise_of_exact_surface_is_zero() {
        // a scenario with the ramp aligned to mesh lines is representable exactly
        // only in trivial cases; the zero surface against a zero truth is.
        let mut sc = Scenario::linear(0.5, 0.05).unwrap();
        sc.amplitude = 0.0;
        let mesh = TriangularMesh::new(5, 1.0).unwrap();
        assert_eq!(rise(&CoefficientSurface::zeros(mesh), &sc, RISE_POINTS), 0.0);
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        let v = simpson(|x| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 4);
        assert_abs_diff_eq!(v, 4.0 - 4.0 + 2.0, epsilon = 1e-12);
    }
}
