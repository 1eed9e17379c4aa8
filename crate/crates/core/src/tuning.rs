//! BIC selection of the bridge level and the smoothness weights.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::design::DesignSystem;
use crate::error::{Error, Result};
use crate::estimator::{FitResult, HistoricalProblem, TuningParams};
use crate::penalties::{Omega, SmoothnessPenalty};

/// `trace(Psi_s (Psi_s^T Psi_s + N R_s)^{-1} Psi_s^T)` over the `active` columns.
pub fn effective_df(design: &DesignSystem, smoothness: &SmoothnessPenalty, active: &[usize]) -> Result<f64> {
    if active.is_empty() {
        return Ok(0.0);
    }
    let n = design.subjects() as f64;
    let a = active.len();
    let gram = design.gram();
    let gs = DMatrix::from_fn(a, a, |i, j| gram[(active[i], active[j])]);
    let lhs = &gs + smoothness.restricted(active) * n;
    // Jacobi scaling keeps the factorization stable when columns differ in size
    let d: Vec<f64> = (0..a).map(|i| if lhs[(i, i)] > 0.0 { lhs[(i, i)].sqrt() } else { 1.0 }).collect();
    let scaled = DMatrix::from_fn(a, a, |i, j| lhs[(i, j)] / (d[i] * d[j]));
    let gs_scaled = DMatrix::from_fn(a, a, |i, j| gs[(i, j)] / (d[i] * d[j]));
    let x = match scaled.clone().cholesky() {
        Some(chol) => chol.solve(&gs_scaled),
        None => scaled.lu().solve(&gs_scaled).ok_or_else(|| {
            Error::Singular("degrees-of-freedom system is singular; increase the smoothness weights or the ridge".into())
        })?,
    };
    let df = x.trace();
    if !df.is_finite() {
        return Err(Error::Singular("degrees of freedom are not finite".into()));
    }
    Ok(df)
}

/// Stand-in for `log 0` when a fit interpolates the data exactly.
pub const BIC_FLOOR: f64 = -1e300;

/// `N log(rss / N) + log(N) df` with `N` the number of subjects.
pub fn bic(rss: f64, df: f64, subjects: usize) -> f64 {
    let n = subjects as f64;
    if !(rss > 0.0) {
        log::warn!("zero residual sum of squares; BIC set to {BIC_FLOOR}");
        return BIC_FLOOR;
    }
    n * (rss / n).ln() + n.ln() * df
}

/// `count` log-spaced values from `10^lo` to `10^hi`.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![10f64.powf(lo)];
    }
    (0..count)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (count - 1) as f64))
        .collect()
}

/// Outcome of one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRecord {
    pub lambda: f64,
    pub omega: Omega,
    pub df: f64,
    pub bic: f64,
    pub delta_hat: f64,
    pub rss: f64,
    pub error: Option<String>,
}

/// Candidate values and, after a search, one record per candidate sorted by BIC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningGrid {
    pub lambdas: Vec<f64>,
    pub omegas: Vec<Omega>,
    pub records: Vec<TuningRecord>,
}

impl Default for TuningGrid {
    fn default() -> Self {
        Self::new(
            log_space(-4.0, 1.0, 8),
            log_space(-6.0, -1.0, 4).into_iter().map(Omega::tied).collect(),
        )
    }
}

impl TuningGrid {
    pub fn new(lambdas: Vec<f64>, omegas: Vec<Omega>) -> Self {
        Self {
            lambdas,
            omegas,
            records: Vec::new(),
        }
    }

    pub fn candidates(&self) -> Vec<TuningParams> {
        self.omegas
            .iter()
            .flat_map(|&omega| self.lambdas.iter().map(move |&lambda| TuningParams { lambda, omega }))
            .collect()
    }

    /// One CSV row per record.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "lambda",
            "omega_h",
            "omega_v",
            "omega_p",
            "df",
            "bic",
            "delta_hat",
            "rss",
            "error",
        ])?;
        for r in &self.records {
            let [h, v, p] = r.omega.as_array();
            w.write_record([
                format!("{:?}", r.lambda),
                format!("{h:?}"),
                format!("{v:?}"),
                format!("{p:?}"),
                format!("{:?}", r.df),
                format!("{:?}", r.bic),
                format!("{:?}", r.delta_hat),
                format!("{:?}", r.rss),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Best tuning point and its full fit.
#[derive(Debug, Clone)]
pub struct TuningOutcome {
    pub best: TuningParams,
    pub fit: FitResult,
    pub grid: TuningGrid,
}

/// Fits every candidate, each from the same initial estimate, and keeps the
/// smallest BIC. Ties go to the larger `lambda`.
pub fn grid_search(problem: &HistoricalProblem, grid: &TuningGrid) -> Result<TuningOutcome> {
    if grid.lambdas.is_empty() || grid.omegas.is_empty() {
        return Err(Error::InvalidConfig("tuning grids must be nonempty".into()));
    }
    let candidates = grid.candidates();
    let records: Vec<TuningRecord> = candidates
        .par_iter()
        .map(|p| match problem.fit_core(p) {
            Ok(core) => TuningRecord {
                lambda: p.lambda,
                omega: p.omega,
                df: core.df,
                bic: core.bic,
                delta_hat: core.delta_hat,
                rss: core.rss,
                error: None,
            },
            Err(e) => {
                log::warn!("candidate lambda={} omega={:?} failed: {e}", p.lambda, p.omega);
                TuningRecord {
                    lambda: p.lambda,
                    omega: p.omega,
                    df: f64::NAN,
                    bic: f64::NAN,
                    delta_hat: f64::NAN,
                    rss: f64::NAN,
                    error: Some(e.to_string()),
                }
            }
        })
        .collect();

    let best = records
        .iter()
        .filter(|r| r.error.is_none())
        .min_by(|a, b| a.bic.total_cmp(&b.bic).then(b.lambda.total_cmp(&a.lambda)))
        .map(|r| TuningParams {
            lambda: r.lambda,
            omega: r.omega,
        });
    let Some(best) = best else {
        return Err(Error::AllCandidatesFailed {
            count: records.len(),
            last: records.last().and_then(|r| r.error.clone()).unwrap_or_default(),
        });
    };
    let mut sorted = records;
    sorted.sort_by(|a, b| {
        a.error
            .is_some()
            .cmp(&b.error.is_some())
            .then(a.bic.total_cmp(&b.bic))
            .then(b.lambda.total_cmp(&a.lambda))
    });
    let fit = problem.fit(&best)?;
    log::info!(
        "selected lambda={} omega={:?}: delta_hat={} bic={}",
        best.lambda,
        best.omega,
        fit.delta_hat,
        fit.bic
    );
    Ok(TuningOutcome {
        best,
        fit,
        grid: TuningGrid {
            lambdas: grid.lambdas.clone(),
            omegas: grid.omegas.clone(),
            records: sorted,
        },
    })
}
