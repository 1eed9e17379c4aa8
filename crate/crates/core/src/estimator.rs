//! The estimation pipeline: initial value, bridge fit, lag extraction,
//! refit, intercept, prediction and the residual bootstrap for the lag.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{accumulate_psi, assemble, center, CenteredData, DesignSystem, FunctionalSample, SampleRole};
use crate::error::{Error, Result};
use crate::mesh::{CoefficientSurface, TriangularMesh};
use crate::penalties::{compute_weights, DifferenceMatrices, GroupWeights, NestedGroups, Omega, PenaltySystem, SmoothnessPenalty};
use crate::solver::{fit_group_bridge, smooth_solve, solve_spd, BridgeConfig, BridgeState, IterationRecord};
use crate::tuning::{bic, effective_df};

/// How a dead group `A_j` (1-based) is turned into a lag.
///
/// The coefficients of `A_j` vanish on and above the line `t = s + (j-1) Delta`,
/// so the surface is already zero from lag `(j-1) Delta` on. `Verbatim` reports
/// `j Delta`; `LowerEdge` reports `(j-1) Delta`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagConvention {
    #[default]
    Verbatim,
    LowerEdge,
}

/// Group weight scheme for the bridge penalty.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    Simple,
    /// Scaled by the initial estimate; falls back to `Simple` when a group of
    /// the initial estimate is exactly zero.
    #[default]
    Adaptive,
}

/// Settings shared by every fit of a problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOptions {
    pub subdivisions: usize,
    /// Bridge exponent and iteration controls. The `lambda` field is ignored;
    /// the penalty level comes from [`TuningParams`].
    pub bridge: BridgeConfig,
    pub weights: WeightScheme,
    pub convention: LagConvention,
    /// Ridge for the initial estimate; `None` means `1e-8 trace(Psi^T Psi) / K`.
    pub ridge: Option<f64>,
    /// Relative zero threshold for lag extraction.
    pub zero_tol: f64,
    /// Response times used in the design; defaults to the response grid.
    pub eval_times: Option<Vec<f64>>,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            subdivisions: 10,
            bridge: BridgeConfig::default(),
            weights: WeightScheme::Adaptive,
            convention: LagConvention::Verbatim,
            ridge: None,
            zero_tol: 1e-8,
            eval_times: None,
        }
    }
}

/// Penalty levels of one fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningParams {
    pub lambda: f64,
    pub omega: Omega,
}

/// `argmin |y - Psi b|^2 + ridge b^T (R + I) b`.
pub fn ols_initial(design: &DesignSystem, r: &DMatrix<f64>, ridge: Option<f64>) -> Result<DVector<f64>> {
    let k = design.mesh().node_count();
    let gram = design.gram();
    let ridge = ridge.unwrap_or_else(|| 1e-8 * gram.trace() / k as f64);
    if !(ridge >= 0.0) {
        return Err(Error::InvalidConfig(format!("ridge must be nonnegative, got {ridge}")));
    }
    let mut lhs = gram + r * ridge;
    for i in 0..k {
        lhs[(i, i)] += ridge;
    }
    solve_spd(lhs, design.cross()).ok_or_else(|| {
        Error::Singular(format!(
            "initial least-squares system is singular with ridge {ridge}; use a larger ridge or a smaller M"
        ))
    })
}

/// Absolute zero threshold `zero_tol * max|b|`.
pub fn absolute_zero_tol(b: &[f64], zero_tol: f64) -> f64 {
    zero_tol * b.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Index (0-based) of the first of `A_1..A_M` whose coefficients are all
/// within `tol` of zero. The apex-only group `A_{M+1}` never defines a lag.
pub fn first_dead_group(b: &[f64], groups: &NestedGroups, tol: f64) -> Option<usize> {
    (0..groups.len() - 1).find(|&j| groups.group(j).iter().all(|&k| b[k].abs() <= tol))
}

/// Lag implied by the first dead group, or `T` when none is dead.
pub fn lag_for_group(dead: Option<usize>, mesh: &TriangularMesh, convention: LagConvention) -> f64 {
    match dead {
        None => mesh.horizon(),
        Some(j) => {
            let steps = match convention {
                LagConvention::Verbatim => j + 1,
                LagConvention::LowerEdge => j,
            };
            if steps == mesh.subdivisions() {
                mesh.horizon()
            } else {
                mesh.step() * steps as f64
            }
        }
    }
}

/// Lag estimate from a bridge-fitted surface. `zero_tol` is relative to the
/// largest coefficient.
pub fn extract_delta(surface: &CoefficientSurface, groups: &NestedGroups, zero_tol: f64, convention: LagConvention) -> f64 {
    let b = surface.coefficients();
    let dead = first_dead_group(b, groups, absolute_zero_tol(b, zero_tol));
    lag_for_group(dead, surface.mesh(), convention)
}

/// Smooth-only refit with the coefficients of the dead group pinned at zero.
pub fn refit(
    design: &DesignSystem,
    smoothness: &SmoothnessPenalty,
    groups: &NestedGroups,
    dead: Option<usize>,
) -> Result<DVector<f64>> {
    let k = design.mesh().node_count();
    let mut keep = vec![true; k];
    if let Some(j) = dead {
        for &node in groups.group(j) {
            keep[node] = false;
        }
    }
    let active: Vec<usize> = (0..k).filter(|&i| keep[i]).collect();
    if active.is_empty() {
        log::warn!("every coefficient is zeroed; the refit is the zero surface");
    }
    smooth_solve(design, smoothness, &active)
}

/// `alpha(t) = ybar(t) - int_0^t xbar(s) beta(s, t) ds` on the response grid.
pub fn recover_intercept(
    x_mean: &[f64],
    y_mean: &[f64],
    grid: &[f64],
    beta: &CoefficientSurface,
) -> Result<Vec<f64>> {
    if x_mean.len() != grid.len() || y_mean.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "means have {} and {} points, grid has {}",
            x_mean.len(),
            y_mean.len(),
            grid.len()
        )));
    }
    let k = beta.mesh().node_count();
    let mut psi = vec![0.0; k];
    grid.iter()
        .zip(y_mean)
        .map(|(&t, &ym)| {
            psi.iter_mut().for_each(|v| *v = 0.0);
            accumulate_psi(beta.mesh(), grid, x_mean, t, &mut psi)?;
            let integral: f64 = psi.iter().zip(beta.coefficients()).map(|(p, b)| p * b).sum();
            Ok(ym - integral)
        })
        .collect()
}

/// Inputs prepared once per data set: centered curves, mesh, design,
/// groups and difference matrices.
#[derive(Debug, Clone)]
pub struct HistoricalProblem {
    pub x: CenteredData,
    pub y: CenteredData,
    pub mesh: TriangularMesh,
    pub design: DesignSystem,
    pub groups: NestedGroups,
    pub diffs: DifferenceMatrices,
    pub options: EstimatorOptions,
}

impl HistoricalProblem {
    pub fn new(x: &FunctionalSample, y: &FunctionalSample, options: EstimatorOptions) -> Result<Self> {
        options.bridge.validate()?;
        let mesh = TriangularMesh::new(options.subdivisions, x.horizon())?;
        let xc = center(x)?;
        let yc = center(y)?;
        let design = assemble(&xc, &yc, &mesh, options.eval_times.as_deref())?;
        Ok(Self {
            groups: NestedGroups::new(&mesh),
            diffs: DifferenceMatrices::new(&mesh),
            x: xc,
            y: yc,
            mesh,
            design,
            options,
        })
    }

    pub fn subjects(&self) -> usize {
        self.design.subjects()
    }

    /// Bridge fit, lag, df, BIC and refit at one tuning point.
    pub fn fit_core(&self, params: &TuningParams) -> Result<CoreFit> {
        fit_core(&self.design, &self.groups, &self.diffs, params, &self.options)
    }

    /// Full fit at one tuning point.
    pub fn fit(&self, params: &TuningParams) -> Result<FitResult> {
        let core = self.fit_core(params)?;
        self.finish(core)
    }

    /// Wraps a core fit with intercept, fitted values and residuals.
    pub fn finish(&self, core: CoreFit) -> Result<FitResult> {
        let grid = self.y.centered.grid().to_vec();
        let beta_hat = CoefficientSurface::new(self.mesh.clone(), core.b_refit.as_slice().to_vec())?;
        let b_bridge = CoefficientSurface::new(self.mesh.clone(), core.state.b.as_slice().to_vec())?;
        let alpha = recover_intercept(
            self.x.mean_curve.as_slice(),
            self.y.mean_curve.as_slice(),
            &grid,
            &beta_hat,
        )?;
        let fitted_c = self.design.psi() * &core.b_refit;
        let residuals = self.design.unstack(&(self.design.y() - &fitted_c));
        let fitted = self.design.unstack(&fitted_c);
        Ok(FitResult {
            beta_hat,
            b_bridge,
            b_initial: core.b_initial.as_slice().to_vec(),
            delta_hat: core.delta_hat,
            dead_group: core.dead_group,
            alpha_hat: alpha,
            grid,
            eval_times: self.design.eval_times().to_vec(),
            lambda: core.params.lambda,
            omega: core.params.omega,
            gamma: self.options.bridge.gamma,
            convention: self.options.convention,
            weights: core.weights,
            objective_trace: core.state.objective_trace,
            fit_log: core.state.log,
            df: core.df,
            bic: core.bic,
            rss: core.rss,
            residuals,
            fitted,
            ci: None,
        })
    }
}

/// Output of a single fit before the intercept and residual bookkeeping.
#[derive(Debug, Clone)]
pub struct CoreFit {
    pub params: TuningParams,
    pub b_initial: DVector<f64>,
    pub weights: GroupWeights,
    pub state: BridgeState,
    pub dead_group: Option<usize>,
    pub delta_hat: f64,
    pub active: Vec<usize>,
    pub df: f64,
    pub bic: f64,
    pub rss: f64,
    pub b_refit: DVector<f64>,
}

/// Runs the pipeline on an assembled design.
pub fn fit_core(
    design: &DesignSystem,
    groups: &NestedGroups,
    diffs: &DifferenceMatrices,
    params: &TuningParams,
    options: &EstimatorOptions,
) -> Result<CoreFit> {
    let smoothness = SmoothnessPenalty::new(diffs.clone(), params.omega)?;
    let b0 = ols_initial(design, smoothness.r(), options.ridge)?;
    let gamma = options.bridge.gamma;
    let weights = match options.weights {
        WeightScheme::Simple => compute_weights(groups, gamma, None)?,
        WeightScheme::Adaptive => match compute_weights(groups, gamma, Some(b0.as_slice())) {
            Err(Error::ZeroGroupNorm { group }) => {
                log::warn!("initial estimate vanishes on group {group}; using simple weights");
                compute_weights(groups, gamma, None)?
            }
            other => other?,
        },
    };
    let penalties = PenaltySystem {
        groups: groups.clone(),
        weights,
        smoothness,
    };
    let config = BridgeConfig {
        lambda: params.lambda,
        ..options.bridge
    };
    let state = fit_group_bridge(design, &penalties, &config, &b0)?;
    let b = state.b.as_slice();
    let tol = absolute_zero_tol(b, options.zero_tol);
    let dead_group = first_dead_group(b, groups, tol);
    let delta_hat = lag_for_group(dead_group, design.mesh(), options.convention);
    let active: Vec<usize> = (0..b.len()).filter(|&k| b[k].abs() > tol).collect();
    let df = effective_df(design, &penalties.smoothness, &active)?;
    let rss = design.rss(&state.b);
    let bic = bic(rss, df, design.subjects());
    let b_refit = refit(design, &penalties.smoothness, groups, dead_group)?;
    Ok(CoreFit {
        params: *params,
        b_initial: b0,
        weights: penalties.weights,
        state,
        dead_group,
        delta_hat,
        active,
        df,
        bic,
        rss,
        b_refit,
    })
}

/// Bootstrap percentile interval for the lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

/// Everything a fitted model carries.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Refitted surface.
    pub beta_hat: CoefficientSurface,
    /// Sparse bridge surface before the refit.
    pub b_bridge: CoefficientSurface,
    pub b_initial: Vec<f64>,
    pub delta_hat: f64,
    /// 0-based index of the group certified as zero.
    pub dead_group: Option<usize>,
    pub alpha_hat: Vec<f64>,
    pub grid: Vec<f64>,
    pub eval_times: Vec<f64>,
    pub lambda: f64,
    pub omega: Omega,
    pub gamma: f64,
    pub convention: LagConvention,
    pub weights: GroupWeights,
    pub objective_trace: Vec<f64>,
    pub fit_log: Vec<IterationRecord>,
    pub df: f64,
    pub bic: f64,
    pub rss: f64,
    /// Centered residuals of the refit, one row per subject.
    pub residuals: DMatrix<f64>,
    /// Centered fitted values of the refit, one row per subject.
    pub fitted: DMatrix<f64>,
    pub ci: Option<ConfidenceInterval>,
}

/// Serialized form of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitJson {
    pub delta_hat: f64,
    pub ci: Option<[f64; 2]>,
    pub level: Option<f64>,
    pub lambda: f64,
    pub omega: Omega,
    pub gamma: f64,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "T")]
    pub t: f64,
    pub bic: f64,
    pub df: f64,
    pub rss: f64,
    pub convention: LagConvention,
    pub dead_group: Option<usize>,
    pub b: Vec<f64>,
    pub b_bridge: Vec<f64>,
    pub alpha: Vec<f64>,
    pub grid: Vec<f64>,
    pub objective_trace: Vec<f64>,
}

impl FitResult {
    pub fn to_json(&self) -> FitJson {
        let mesh = self.beta_hat.mesh();
        FitJson {
            delta_hat: self.delta_hat,
            ci: self.ci.as_ref().map(|c| [c.lower, c.upper]),
            level: self.ci.as_ref().map(|c| c.level),
            lambda: self.lambda,
            omega: self.omega,
            gamma: self.gamma,
            m: mesh.subdivisions(),
            t: mesh.horizon(),
            bic: self.bic,
            df: self.df,
            rss: self.rss,
            convention: self.convention,
            dead_group: self.dead_group,
            b: self.beta_hat.coefficients().to_vec(),
            b_bridge: self.b_bridge.coefficients().to_vec(),
            alpha: self.alpha_hat.clone(),
            grid: self.grid.clone(),
            objective_trace: self.objective_trace.clone(),
        }
    }

    /// Predicted response curves on the fit's grid.
    pub fn predict(&self, x_new: &FunctionalSample) -> Result<FunctionalSample> {
        predict(self, x_new)
    }
}

/// `y_i(t_q) = alpha(t_q) + sum_k b_k psi_ik(t_q)` for new covariate curves on
/// the fit's grid.
pub fn predict(fit: &FitResult, x_new: &FunctionalSample) -> Result<FunctionalSample> {
    if x_new.grid() != fit.grid.as_slice() {
        return Err(Error::GridMismatch("new covariates must share the fitted grid".into()));
    }
    let mesh = fit.beta_hat.mesh();
    let b = fit.beta_hat.coefficients();
    let q = fit.grid.len();
    let rows: Vec<Vec<f64>> = (0..x_new.curve_count())
        .into_par_iter()
        .map(|i| {
            let xi = x_new.curve(i);
            let mut psi = vec![0.0; b.len()];
            fit.grid
                .iter()
                .zip(&fit.alpha_hat)
                .map(|(&t, &a)| {
                    psi.iter_mut().for_each(|v| *v = 0.0);
                    accumulate_psi(mesh, &fit.grid, &xi, t, &mut psi)?;
                    Ok(a + psi.iter().zip(b).map(|(p, c)| p * c).sum::<f64>())
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let values = DMatrix::from_fn(rows.len(), q, |i, j| rows[i][j]);
    FunctionalSample::new(fit.grid.clone(), values, SampleRole::Response)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub replications: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            replications: 200,
            level: 0.95,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub ci: ConfidenceInterval,
    /// Lags of the successful replications, in replication order.
    pub deltas: Vec<f64>,
    pub failures: usize,
    pub replications: usize,
}

/// Inverse empirical CDF at probability `p`.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Residual bootstrap of the lag: whole residual curves are drawn with
/// replacement, added to the fitted curves, and the bridge fit is rerun at the
/// fit's tuning parameters. Replication `r` draws from stream `r` of a ChaCha
/// generator seeded with `seed`, so the result does not depend on scheduling.
pub fn bootstrap_delta_ci(problem: &HistoricalProblem, fit: &FitResult, opts: &BootstrapOptions) -> Result<BootstrapResult> {
    if opts.replications < 2 {
        return Err(Error::InvalidConfig(format!("need at least two replications, got {}", opts.replications)));
    }
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::InvalidConfig(format!("level must lie in (0, 1), got {}", opts.level)));
    }
    let n = fit.residuals.nrows();
    let q = fit.residuals.ncols();
    let params = TuningParams {
        lambda: fit.lambda,
        omega: fit.omega,
    };
    let outcomes: Vec<Result<f64>> = (0..opts.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(r as u64);
            let mut ystar = fit.fitted.clone();
            for i in 0..n {
                let src = rng.gen_range(0..n);
                for c in 0..q {
                    ystar[(i, c)] += fit.residuals[(src, c)];
                }
            }
            for c in 0..q {
                let mean = ystar.column(c).mean();
                ystar.column_mut(c).add_scalar_mut(-mean);
            }
            let design = problem.design.with_response(problem.design.stack(&ystar))?;
            let core = fit_core(&design, &problem.groups, &problem.diffs, &params, &problem.options)?;
            Ok(core.delta_hat)
        })
        .collect();
    let mut deltas = Vec::with_capacity(outcomes.len());
    let mut failures = 0;
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(d) => deltas.push(d),
            Err(e) => {
                log::warn!("bootstrap replication {r} failed: {e}");
                failures += 1;
            }
        }
    }
    if failures * 10 > opts.replications {
        return Err(Error::BootstrapFailures {
            failed: failures,
            total: opts.replications,
        });
    }
    let mut sorted = deltas.clone();
    sorted.sort_by(f64::total_cmp);
    let alpha = 1.0 - opts.level;
    Ok(BootstrapResult {
        ci: ConfidenceInterval {
            lower: empirical_quantile(&sorted, alpha / 2.0),
            upper: empirical_quantile(&sorted, 1.0 - alpha / 2.0),
            level: opts.level,
        },
        deltas,
        failures,
        replications: opts.replications,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::compute_psi;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn smooth_curves(n: usize, grid: &[f64], seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coefs: Vec<[f64; 4]> = (0..n)
            .map(|_| {
                [
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(0.0..6.0),
                ]
            })
            .collect();
        DMatrix::from_fn(n, grid.len(), |i, q| {
            let [a, b, c, p] = coefs[i];
            let t = grid[q];
            a + t + b * (6.0 * t + p).sin() + c * (11.0 * t).cos()
        })
    }

    fn grid(points: usize, horizon: f64) -> Vec<f64> {
        (0..points).map(|q| horizon * q as f64 / (points - 1) as f64).collect()
    }

    fn sample(values: DMatrix<f64>, g: &[f64], role: SampleRole) -> FunctionalSample {
        FunctionalSample::new(g.to_vec(), values, role).unwrap()
    }

    /// Responses generated exactly from a surface in the finite-element space.
    fn model_problem(b_true: &[f64], m: usize, n: usize, seed: u64, options: EstimatorOptions) -> HistoricalProblem {
        let g = grid(33, 1.0);
        let mesh = TriangularMesh::new(m, 1.0).unwrap();
        let x = smooth_curves(n, &g, seed);
        let y = DMatrix::from_fn(n, g.len(), |i, q| {
            let xi: Vec<f64> = x.row(i).iter().copied().collect();
            let psi = compute_psi(&mesh, &g, &xi, g[q]).unwrap();
            psi.iter().zip(b_true).map(|(p, b)| p * b).sum::<f64>() + 0.3 * g[q]
        });
        let xs = sample(x, &g, SampleRole::Covariate);
        let ys = sample(y, &g, SampleRole::Response);
        HistoricalProblem::new(&xs, &ys, EstimatorOptions { subdivisions: m, ..options }).unwrap()
    }

    fn lag_surface(mesh: &TriangularMesh, lag_steps: usize) -> Vec<f64> {
        (0..mesh.node_count())
            .map(|k| {
                let lag = mesh.lattice_point(k).unwrap().lag();
                if lag < lag_steps {
                    5.0 * (1.0 - lag as f64 / lag_steps as f64) + 1.0
                } else {
                    0.0
                }
            })
            .collect()
    }

    #[test]
    fn ols_initial_round_trip_and_limits() {
        let mesh = TriangularMesh::new(4, 1.0).unwrap();
        let b_true: Vec<f64> = (0..mesh.node_count()).map(|k| (k as f64 * 0.7).sin()).collect();
        let p = model_problem(&b_true, 4, 30, 3, EstimatorOptions::default());
        let r = DMatrix::zeros(mesh.node_count(), mesh.node_count());
        let b0 = ols_initial(&p.design, &r, Some(0.0)).unwrap();
        for (a, b) in b0.iter().zip(&b_true) {
            assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
        }
        let zero = p.design.with_response(DVector::zeros(p.design.y().len())).unwrap();
        assert_eq!(ols_initial(&zero, &r, None).unwrap().norm(), 0.0);
        let big = ols_initial(&p.design, &r, Some(1e12)).unwrap();
        assert!(big.norm() < 1e-6);
    }

    #[test]
    fn extract_delta_examples() {
        let mesh = TriangularMesh::new(3, 1.0).unwrap();
        let groups = NestedGroups::new(&mesh);
        let zero = CoefficientSurface::zeros(mesh.clone());
        assert_abs_diff_eq!(extract_delta(&zero, &groups, 1e-8, LagConvention::Verbatim), 1.0 / 3.0);
        let mut apex = vec![0.0; 10];
        apex[6] = 2.0;
        let s = CoefficientSurface::new(mesh.clone(), apex).unwrap();
        assert_eq!(extract_delta(&s, &groups, 1e-8, LagConvention::Verbatim), 1.0);
        assert_eq!(extract_delta(&s, &groups, 1e-8, LagConvention::LowerEdge), 1.0);

        let mesh = TriangularMesh::new(20, 0.64).unwrap();
        let groups = NestedGroups::new(&mesh);
        // nonzero exactly at lags 0..=9: A_10 holds lag 9 so is alive, A_11 is dead
        let b = lag_surface(&mesh, 10);
        let s = CoefficientSurface::new(mesh.clone(), b).unwrap();
        assert_abs_diff_eq!(extract_delta(&s, &groups, 1e-8, LagConvention::Verbatim), 0.352, epsilon = 1e-12);
        assert_abs_diff_eq!(extract_delta(&s, &groups, 1e-8, LagConvention::LowerEdge), 0.32, epsilon = 1e-12);
    }

    #[test]
    fn extract_delta_is_quantized() {
        let mesh = TriangularMesh::new(10, 1.0).unwrap();
        let groups = NestedGroups::new(&mesh);
        for steps in 0..=11 {
            let s = CoefficientSurface::new(mesh.clone(), lag_surface(&mesh, steps)).unwrap();
            for conv in [LagConvention::Verbatim, LagConvention::LowerEdge] {
                let d = extract_delta(&s, &groups, 1e-8, conv);
                let ratio = d / mesh.step();
                assert!((ratio - ratio.round()).abs() < 1e-9 && d >= 0.0 && d <= 1.0, "{steps} {conv:?} {d}");
            }
        }
    }

    #[test]
    fn recover_intercept_examples() {
        let mesh = TriangularMesh::new(4, 1.0).unwrap();
        let g = grid(21, 1.0);
        let ym: Vec<f64> = g.iter().map(|t| t * t + 1.0).collect();
        let zero = CoefficientSurface::zeros(mesh.clone());
        assert_eq!(recover_intercept(&vec![3.0; 21], &ym, &g, &zero).unwrap(), ym);
        let c = 2.5;
        let flat = CoefficientSurface::new(mesh.clone(), vec![c; mesh.node_count()]).unwrap();
        let centered = recover_intercept(&vec![0.0; 21], &vec![0.0; 21], &g, &flat).unwrap();
        assert!(centered.iter().all(|&a| a == 0.0));
        let alpha = recover_intercept(&vec![1.0; 21], &ym, &g, &flat).unwrap();
        for (q, &t) in g.iter().enumerate() {
            assert_abs_diff_eq!(alpha[q], ym[q] - c * t, epsilon = 1e-12);
        }
        assert!(recover_intercept(&vec![1.0; 20], &ym, &g, &flat).is_err());
    }

    fn fitted_problem(lambda: f64) -> (HistoricalProblem, FitResult) {
        let mesh = TriangularMesh::new(6, 1.0).unwrap();
        let b_true = lag_surface(&mesh, 3);
        let p = model_problem(&b_true, 6, 24, 11, EstimatorOptions::default());
        let fit = p
            .fit(&TuningParams {
                lambda,
                omega: Omega::tied(1e-4),
            })
            .unwrap();
        (p, fit)
    }

    #[test]
    fn refit_support_and_optimality() {
        let (p, fit) = fitted_problem(0.05);
        let dead = fit.dead_group.expect("a dead group");
        let b = fit.beta_hat.coefficients();
        for &k in p.groups.group(dead) {
            assert!(b[k].abs() <= 1e-10);
        }
        // gradient of |y - Psi b|^2 + N b^T R_s b over the surviving coordinates
        let smooth = SmoothnessPenalty::new(p.diffs.clone(), fit.omega).unwrap();
        let active: Vec<usize> = (0..b.len()).filter(|k| !p.groups.group(dead).contains(k)).collect();
        let rs = smooth.restricted(&active);
        let bv = DVector::from_column_slice(b);
        let n = p.subjects() as f64;
        let grad_ls = (p.design.gram() * &bv - p.design.cross()) * 2.0;
        let ba = DVector::from_fn(active.len(), |i, _| b[active[i]]);
        let grad_r = &rs * &ba * (2.0 * n);
        let scale = p.design.cross().amax();
        for (i, &k) in active.iter().enumerate() {
            assert!((grad_ls[k] + grad_r[i]).abs() <= 1e-6 * scale.max(1.0), "coordinate {k}");
        }
        let ratio = fit.delta_hat / p.mesh.step();
        assert!((ratio - ratio.round()).abs() < 1e-9);
    }

    #[test]
    fn refit_without_dead_group_is_full_smooth_fit() {
        let (p, fit) = fitted_problem(0.0);
        assert_eq!(fit.delta_hat, 1.0);
        assert_eq!(fit.dead_group, None);
        let smooth = SmoothnessPenalty::new(p.diffs.clone(), fit.omega).unwrap();
        let all: Vec<usize> = (0..p.mesh.node_count()).collect();
        let direct = smooth_solve(&p.design, &smooth, &all).unwrap();
        for (a, b) in fit.beta_hat.coefficients().iter().zip(direct.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        let all_dead = refit(&p.design, &smooth, &p.groups, Some(0)).unwrap();
        assert_eq!(all_dead.norm(), 0.0);
    }

    #[test]
    fn large_lambda_kills_everything() {
        let (_, fit) = fitted_problem(1e6);
        assert_abs_diff_eq!(fit.delta_hat, 1.0 / 6.0, epsilon = 1e-12);
        assert!(fit.beta_hat.coefficients().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn prediction_consistency() {
        let (p, fit) = fitted_problem(0.05);
        let x_train = FunctionalSample::new(
            p.x.centered.grid().to_vec(),
            p.x.centered.values() + DMatrix::from_fn(p.subjects(), p.x.mean_curve.len(), |_, q| p.x.mean_curve[q]),
            SampleRole::Covariate,
        )
        .unwrap();
        let yhat = fit.predict(&x_train).unwrap();
        for i in 0..p.subjects() {
            for q in 0..fit.grid.len() {
                let expected = fit.fitted[(i, q)] + p.y.mean_curve[q];
                assert_abs_diff_eq!(yhat.values()[(i, q)], expected, epsilon = 1e-9);
            }
        }
        let mean = DMatrix::from_fn(1, fit.grid.len(), |_, q| p.x.mean_curve[q]);
        let ybar = fit.predict(&sample(mean, &fit.grid, SampleRole::Covariate)).unwrap();
        for q in 0..fit.grid.len() {
            assert_abs_diff_eq!(ybar.values()[(0, q)], p.y.mean_curve[q], epsilon = 1e-9);
        }
        let mut zero_fit = fit.clone();
        zero_fit.beta_hat = CoefficientSurface::zeros(p.mesh.clone());
        let pred = zero_fit.predict(&x_train).unwrap();
        for i in 0..p.subjects() {
            for q in 0..fit.grid.len() {
                assert_eq!(pred.values()[(i, q)], fit.alpha_hat[q]);
            }
        }
        let other = sample(DMatrix::zeros(1, 5), &grid(5, 1.0), SampleRole::Covariate);
        assert!(matches!(fit.predict(&other), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn bootstrap_is_deterministic_and_degenerate_without_noise() {
        let (p, fit) = fitted_problem(0.05);
        let opts = BootstrapOptions {
            replications: 20,
            level: 0.9,
            seed: 5,
        };
        let a = bootstrap_delta_ci(&p, &fit, &opts).unwrap();
        let b = bootstrap_delta_ci(&p, &fit, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.failures, 0);
        assert_eq!(a.deltas.len(), 20);
        assert_eq!((a.ci.lower, a.ci.upper), (fit.delta_hat, fit.delta_hat));
        assert!(bootstrap_delta_ci(&p, &fit, &BootstrapOptions { replications: 1, ..opts }).is_err());
        assert!(bootstrap_delta_ci(&p, &fit, &BootstrapOptions { level: 1.0, ..opts }).is_err());
    }

    #[test]
    fn quantile_definition() {
        let v: Vec<f64> = (1..=200).map(f64::from).collect();
        assert_eq!(empirical_quantile(&v, 0.025), 5.0);
        assert_eq!(empirical_quantile(&v, 0.975), 195.0);
        assert_eq!(empirical_quantile(&[3.0], 0.5), 3.0);
        assert_eq!(empirical_quantile(&v, 0.0), 1.0);
    }
}
