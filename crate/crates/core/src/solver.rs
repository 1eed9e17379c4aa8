//! Group bridge estimation by alternating a closed-form `theta` update with a
//! rescaled LASSO.
//!
//! The non-convex criterion
//!
//! ```text
//! (1/N) |y - Psi b|^2 + lambda * sum_j c_j |b_{A_j}|_1^gamma + b^T R b
//! ```
//!
//! is minimized through its convex reformulation in `(b, theta)`:
//!
//! ```text
//! (1/N) |y - Psi b|^2 + sum_j theta_j^(1-1/gamma) c_j^(1/gamma) |b_{A_j}|_1
//!     + tau * sum_j theta_j + b^T R b,    theta >= 0,
//! ```
//!
//! with `tau = [lambda gamma^gamma (1-gamma)^(1-gamma)]^(1/(1-gamma))`. For a
//! fixed `theta` the `b` step is a weighted LASSO; substituting
//! `b = G b*` with `G = diag(1 / (N g_k))` turns it into a unit-weight LASSO on
//! the augmented design `[Psi; sqrt(w N) D] G`, which is solved here by
//! coordinate descent on its Gram matrix.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::DesignSystem;
use crate::error::{Error, Result};
use crate::penalties::{check_gamma, GroupWeights, NestedGroups, PenaltySystem, SmoothnessPenalty};

/// Settings for one group bridge fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgeConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub max_outer_iters: usize,
    /// Relative change `|b_s - b_{s-1}|_2 / (1 + |b_{s-1}|_2)` that ends the iteration.
    pub outer_tol: f64,
    /// Maximum coordinate-descent sweeps per LASSO solve.
    pub lasso_max_iters: usize,
    pub lasso_tol: f64,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            lambda: 0.0,
            max_outer_iters: 100,
            outer_tol: 1e-6,
            lasso_max_iters: 10_000,
            lasso_tol: 1e-6,
        }
    }
}

impl BridgeConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_gamma(self.gamma)?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if !(self.outer_tol > 0.0 && self.lasso_tol > 0.0) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        if self.max_outer_iters == 0 || self.lasso_max_iters == 0 {
            return Err(Error::InvalidConfig("iteration limits must be positive".into()));
        }
        Ok(())
    }

    pub fn tau(&self) -> Result<f64> {
        tau_from_lambda(self.lambda, self.gamma)
    }
}

/// `tau = [lambda gamma^gamma (1-gamma)^(1-gamma)]^(1/(1-gamma))`.
pub fn tau_from_lambda(lambda: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!("lambda must be nonnegative, got {lambda}")));
    }
    if gamma == 0.5 {
        // exact: the bracket is lambda / 2 and the exponent is 2
        let h = lambda / 2.0;
        return Ok(h * h);
    }
    let base = lambda * gamma.powf(gamma) * (1.0 - gamma).powf(1.0 - gamma);
    Ok(base.powf(1.0 / (1.0 - gamma)))
}

/// `theta_j = c_j ((1-gamma)/(tau gamma))^gamma |b_{A_j}|_1^gamma`.
pub fn update_theta(b: &[f64], groups: &NestedGroups, weights: &GroupWeights, tau: f64) -> Result<Vec<f64>> {
    let gamma = weights.gamma;
    check_gamma(gamma)?;
    if !(tau > 0.0) {
        return Err(Error::InvalidConfig(format!("theta update needs tau > 0, got {tau}")));
    }
    let factor = ((1.0 - gamma) / (tau * gamma)).powf(gamma);
    Ok((0..groups.len())
        .map(|j| {
            let norm = groups.l1_norm(j, b);
            if norm == 0.0 {
                0.0
            } else {
                weights.c[j] * factor * norm.powf(gamma)
            }
        })
        .collect())
}

/// Per-coefficient penalty loads `g_k = sum_{j <= l(k)} theta_j^(1-1/gamma) c_j^(1/gamma)`.
/// A zero `theta_j` makes the load infinite for every node of `A_j`.
pub fn update_g(theta: &[f64], weights: &GroupWeights, groups: &NestedGroups) -> Vec<f64> {
    let gamma = weights.gamma;
    let mut prefix = Vec::with_capacity(theta.len());
    let mut acc = 0.0;
    for (j, &th) in theta.iter().enumerate() {
        acc += if th > 0.0 {
            th.powf(1.0 - 1.0 / gamma) * weights.c[j].powf(1.0 / gamma)
        } else {
            f64::INFINITY
        };
        prefix.push(acc);
    }
    groups.membership().iter().map(|&l| prefix[l - 1]).collect()
}

/// Criterion value `(1/N)|y - Psi b|^2 + lambda sum_j c_j |b_{A_j}|_1^gamma + b^T R b`.
pub fn criterion(design: &DesignSystem, penalties: &PenaltySystem, lambda: f64, b: &DVector<f64>) -> f64 {
    let n = design.subjects() as f64;
    let gamma = penalties.weights.gamma;
    let bridge: f64 = (0..penalties.groups.len())
        .map(|j| penalties.weights.c[j] * penalties.groups.l1_norm(j, b.as_slice()).powf(gamma))
        .sum();
    design.rss(b) / n + lambda * bridge + penalties.smoothness.quadratic(b.as_slice())
}

/// The reformulated criterion in `(b, theta)`; a zero `theta_j` with
/// `b_{A_j} = 0` contributes nothing.
pub fn reformulated_criterion(
    design: &DesignSystem,
    penalties: &PenaltySystem,
    tau: f64,
    b: &DVector<f64>,
    theta: &[f64],
) -> f64 {
    let n = design.subjects() as f64;
    let gamma = penalties.weights.gamma;
    let mut weighted = 0.0;
    for (j, &th) in theta.iter().enumerate() {
        let norm = penalties.groups.l1_norm(j, b.as_slice());
        if norm == 0.0 {
            continue;
        }
        weighted += if th > 0.0 {
            th.powf(1.0 - 1.0 / gamma) * penalties.weights.c[j].powf(1.0 / gamma) * norm
        } else {
            f64::INFINITY
        };
    }
    design.rss(b) / n + weighted + tau * theta.iter().sum::<f64>() + penalties.smoothness.quadratic(b.as_slice())
}

/// Coordinate-descent controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    pub max_sweeps: usize,
    pub tol: f64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 10_000,
            tol: 1e-6,
        }
    }
}

/// Solution of `min_x x^T H x - 2 c^T x + sum_k |x_k|`.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub x: DVector<f64>,
    pub sweeps: usize,
    /// Largest KKT violation, in absolute units of the unit penalty.
    pub kkt_residual: f64,
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// KKT violation of coordinate `k` given the smooth gradient `grad_k`.
fn kkt_violation(x: f64, grad: f64) -> f64 {
    if x > 0.0 {
        (grad + 1.0).abs()
    } else if x < 0.0 {
        (grad - 1.0).abs()
    } else {
        (grad.abs() - 1.0).max(0.0)
    }
}

/// Unit-weight LASSO on a Gram matrix: minimizes `x^T H x - 2 c^T x + |x|_1`,
/// which equals `|y - X x|^2 + |x|_1` up to a constant when `H = X^T X` and
/// `c = X^T y`.
///
/// Cyclic coordinate descent keeps `H x` up to date after every move. After a
/// sweep the current support and signs are used for a Newton step on that
/// face; it is kept only when the signs survive, so the objective never
/// increases. Convergence is declared once every KKT violation is below
/// `tol * max(1, 2 |c|_inf)`.
pub fn lasso_gram(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    warm: Option<&DVector<f64>>,
    opts: LassoOptions,
) -> Result<LassoSolution> {
    let p = c.len();
    if h.shape() != (p, p) {
        return Err(Error::Dimension(format!("Gram matrix is {:?}, linear term has {p}", h.shape())));
    }
    let mut x = warm.cloned().unwrap_or_else(|| DVector::zeros(p));
    for k in 0..p {
        if !(h[(k, k)] > 0.0) {
            x[k] = 0.0;
        }
    }
    let mut hx = h * &x;
    let scale = 1.0_f64.max(2.0 * c.amax());
    let threshold = opts.tol * scale;

    let kkt = |x: &DVector<f64>, hx: &DVector<f64>| -> f64 {
        (0..p)
            .filter(|&k| h[(k, k)] > 0.0)
            .map(|k| kkt_violation(x[k], 2.0 * (hx[k] - c[k])))
            .fold(0.0, f64::max)
    };

    let mut residual = kkt(&x, &hx);
    if residual <= threshold {
        return Ok(LassoSolution { x, sweeps: 0, kkt_residual: residual });
    }
    for sweep in 1..=opts.max_sweeps {
        for k in 0..p {
            let hkk = h[(k, k)];
            if !(hkk > 0.0) {
                continue;
            }
            let z = c[k] - (hx[k] - hkk * x[k]);
            let new = soft_threshold(z, 0.5) / hkk;
            let delta = new - x[k];
            if delta != 0.0 {
                x[k] = new;
                hx.axpy(delta, &h.column(k), 1.0);
            }
        }
        residual = kkt(&x, &hx);
        if residual <= threshold {
            return Ok(LassoSolution { x, sweeps: sweep, kkt_residual: residual });
        }
        if let Some((xn, hxn)) = polish(h, c, &x) {
            let r = kkt(&xn, &hxn);
            x = xn;
            hx = hxn;
            residual = r;
            if residual <= threshold {
                return Ok(LassoSolution { x, sweeps: sweep, kkt_residual: residual });
            }
        }
    }
    Err(Error::LassoNotConverged {
        sweeps: opts.max_sweeps,
        kkt_residual: residual / scale,
    })
}

/// Newton step on the face defined by the current signs. Returns the new point
/// and `H x` when every sign is preserved.
fn polish(h: &DMatrix<f64>, c: &DVector<f64>, x: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
    let active: Vec<usize> = (0..x.len()).filter(|&k| x[k] != 0.0).collect();
    if active.is_empty() {
        return None;
    }
    let a = active.len();
    // Jacobi scaling keeps the factorization well behaved when the rescaled
    // columns differ by many orders of magnitude.
    let d: Vec<f64> = active.iter().map(|&k| h[(k, k)].sqrt()).collect();
    let haa = DMatrix::from_fn(a, a, |i, j| h[(active[i], active[j])] / (d[i] * d[j]));
    let rhs = DVector::from_fn(a, |i, _| (c[active[i]] - 0.5 * x[active[i]].signum()) / d[i]);
    let chol = haa.clone().cholesky()?;
    let mut z = chol.solve(&rhs);
    // one step of iterative refinement
    let r = &rhs - &haa * &z;
    z += chol.solve(&r);
    let mut xn = DVector::zeros(x.len());
    for (i, &k) in active.iter().enumerate() {
        let v = z[i] / d[i];
        if !v.is_finite() || v.signum() != x[k].signum() || v == 0.0 {
            return None;
        }
        xn[k] = v;
    }
    let hxn = h * &xn;
    Some((xn, hxn))
}

/// Plain LASSO `min |y - X x|^2 + |x|_1` on an explicit design.
pub fn lasso(xmat: &DMatrix<f64>, y: &DVector<f64>, opts: LassoOptions) -> Result<LassoSolution> {
    let h = xmat.tr_mul(xmat);
    let c = xmat.tr_mul(y);
    lasso_gram(&h, &c, None, opts)
}

/// Quadratic part of the criterion scaled by `N`: `|y - Psi b|^2 + N b^T R b`
/// expands to `b^T H b - 2 c^T b + y^T y` with `H = Psi^T Psi + N R`.
#[derive(Debug, Clone)]
pub struct SmoothQuadratic {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub subjects: usize,
}

impl SmoothQuadratic {
    pub fn new(design: &DesignSystem, smoothness: &SmoothnessPenalty) -> Self {
        let n = design.subjects();
        Self {
            hessian: design.gram() + smoothness.r() * n as f64,
            linear: design.cross().clone(),
            subjects: n,
        }
    }
}

/// Result of the `b` step: `b = G b*` in the original scale.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledLassoSolution {
    pub b: DVector<f64>,
    pub sweeps: usize,
    pub kkt_residual: f64,
}

/// Solves the rescaled LASSO for given loads `g`. Coordinates with infinite
/// load stay at zero.
pub fn solve_rescaled_lasso(
    quad: &SmoothQuadratic,
    g: &[f64],
    warm: Option<&DVector<f64>>,
    opts: LassoOptions,
) -> Result<RescaledLassoSolution> {
    let k_all = g.len();
    if quad.linear.len() != k_all {
        return Err(Error::Dimension(format!("{} loads for {} coefficients", k_all, quad.linear.len())));
    }
    let n = quad.subjects as f64;
    let free: Vec<usize> = (0..k_all).filter(|&k| g[k].is_finite()).collect();
    let mut b = DVector::zeros(k_all);
    if free.is_empty() {
        return Ok(RescaledLassoSolution { b, sweeps: 0, kkt_residual: 0.0 });
    }
    let scale: Vec<f64> = free.iter().map(|&k| 1.0 / (n * g[k].max(f64::MIN_POSITIVE))).collect();
    let f = free.len();
    let h = DMatrix::from_fn(f, f, |i, j| scale[i] * quad.hessian[(free[i], free[j])] * scale[j]);
    let c = DVector::from_fn(f, |i, _| scale[i] * quad.linear[free[i]]);
    let warm_scaled = warm.map(|w| DVector::from_fn(f, |i, _| w[free[i]] / scale[i]));
    let sol = lasso_gram(&h, &c, warm_scaled.as_ref(), opts)?;
    for (i, &k) in free.iter().enumerate() {
        b[k] = scale[i] * sol.x[i];
    }
    Ok(RescaledLassoSolution {
        b,
        sweeps: sol.sweeps,
        kkt_residual: sol.kkt_residual,
    })
}

/// The `b` step with the design, smoothness penalty and loads spelled out.
pub fn solve_lasso(
    design: &DesignSystem,
    smoothness: &SmoothnessPenalty,
    g: &[f64],
    warm: Option<&DVector<f64>>,
    opts: LassoOptions,
) -> Result<DVector<f64>> {
    let quad = SmoothQuadratic::new(design, smoothness);
    Ok(solve_rescaled_lasso(&quad, g, warm, opts)?.b)
}

/// Penalized least squares `min |y - Psi_A b_A|^2 + N b_A^T R_A b_A` over the
/// nodes in `active`, where `R_A` keeps only difference rows with both ends
/// active. Other coefficients are zero.
pub fn smooth_solve(design: &DesignSystem, smoothness: &SmoothnessPenalty, active: &[usize]) -> Result<DVector<f64>> {
    let k_all = design.mesh().node_count();
    let mut b = DVector::zeros(k_all);
    if active.is_empty() {
        return Ok(b);
    }
    let n = design.subjects() as f64;
    let a = active.len();
    let gram = design.gram();
    let r = smoothness.restricted(active);
    let lhs = DMatrix::from_fn(a, a, |i, j| gram[(active[i], active[j])] + n * r[(i, j)]);
    let rhs = DVector::from_fn(a, |i, _| design.cross()[active[i]]);
    let sol = solve_spd(lhs, &rhs).ok_or_else(|| {
        Error::Singular("penalized normal equations are singular; increase the smoothness weights or reduce M".into())
    })?;
    for (i, &k) in active.iter().enumerate() {
        b[k] = sol[i];
    }
    Ok(b)
}

/// Cholesky solve with Jacobi scaling and one refinement step; falls back to
/// LU for semidefinite-but-invertible systems.
pub(crate) fn solve_spd(lhs: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let n = rhs.len();
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let v = lhs[(i, i)];
            if v > 0.0 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| lhs[(i, j)] / (d[i] * d[j]));
    let srhs = DVector::from_fn(n, |i, _| rhs[i] / d[i]);
    let z = if let Some(chol) = scaled.clone().cholesky() {
        let mut z = chol.solve(&srhs);
        let r = &srhs - &scaled * &z;
        z += chol.solve(&r);
        z
    } else {
        let lu = scaled.clone().lu();
        let mut z = lu.solve(&srhs)?;
        let r = &srhs - &scaled * &z;
        z += lu.solve(&r)?;
        z
    };
    let out = DVector::from_fn(n, |i, _| z[i] / d[i]);
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// One line of the fit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub active: usize,
    pub dead_groups: usize,
    pub lasso_sweeps: usize,
}

/// State of the alternating iteration.
#[derive(Debug, Clone)]
pub struct BridgeState {
    pub b: DVector<f64>,
    pub theta: Vec<f64>,
    pub g: Vec<f64>,
    /// Criterion value at the initial vector and after every outer iteration.
    pub objective_trace: Vec<f64>,
    pub log: Vec<IterationRecord>,
}

impl BridgeState {
    pub fn iterations(&self) -> usize {
        self.log.len()
    }
}

fn dead_groups(groups: &NestedGroups, b: &[f64]) -> usize {
    (0..groups.len()).filter(|&j| groups.l1_norm(j, b) == 0.0).count()
}

/// Alternates the `theta` and `b` updates from `b0` until the relative change
/// in `b` falls below `outer_tol`. `lambda = 0` skips the bridge penalty and
/// returns the smooth penalized least-squares fit.
pub fn fit_group_bridge(
    design: &DesignSystem,
    penalties: &PenaltySystem,
    config: &BridgeConfig,
    b0: &DVector<f64>,
) -> Result<BridgeState> {
    config.validate()?;
    let k_all = design.mesh().node_count();
    if b0.len() != k_all {
        return Err(Error::Dimension(format!("initial vector has {} entries, expected {k_all}", b0.len())));
    }
    if (penalties.weights.gamma - config.gamma).abs() > 0.0 {
        return Err(Error::InvalidConfig(format!(
            "weights were built for gamma = {}, config has {}",
            penalties.weights.gamma, config.gamma
        )));
    }
    if config.lambda == 0.0 {
        let all: Vec<usize> = (0..k_all).collect();
        let b = smooth_solve(design, &penalties.smoothness, &all)?;
        let objective = criterion(design, penalties, 0.0, &b);
        return Ok(BridgeState {
            b,
            theta: Vec::new(),
            g: vec![0.0; k_all],
            objective_trace: vec![objective],
            log: Vec::new(),
        });
    }

    let tau = config.tau()?;
    let quad = SmoothQuadratic::new(design, &penalties.smoothness);
    let opts = LassoOptions {
        max_sweeps: config.lasso_max_iters,
        tol: config.lasso_tol,
    };
    let mut b = b0.clone();
    let mut trace = vec![criterion(design, penalties, config.lambda, &b)];
    let mut log = Vec::new();
    for iteration in 1..=config.max_outer_iters {
        let theta = update_theta(b.as_slice(), &penalties.groups, &penalties.weights, tau)?;
        let g = update_g(&theta, &penalties.weights, &penalties.groups);
        let step = solve_rescaled_lasso(&quad, &g, Some(&b), opts)?;
        let objective = criterion(design, penalties, config.lambda, &step.b);
        let change = (&step.b - &b).norm() / (1.0 + b.norm());
        trace.push(objective);
        let record = IterationRecord {
            iteration,
            objective,
            active: step.b.iter().filter(|v| **v != 0.0).count(),
            dead_groups: dead_groups(&penalties.groups, step.b.as_slice()),
            lasso_sweeps: step.sweeps,
        };
        log::trace!("bridge iteration {iteration}: {record:?}");
        log.push(record);
        b = step.b;
        if change < config.outer_tol {
            let theta = update_theta(b.as_slice(), &penalties.groups, &penalties.weights, tau)?;
            let g = update_g(&theta, &penalties.weights, &penalties.groups);
            return Ok(BridgeState {
                b,
                theta,
                g,
                objective_trace: trace,
                log,
            });
        }
    }
    Err(Error::BridgeNotConverged {
        iterations: config.max_outer_iters,
        objective_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::TriangularMesh;
    use crate::penalties::{compute_weights, DifferenceMatrices, Omega};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tau_examples() {
        assert_eq!(tau_from_lambda(0.0, 0.3).unwrap(), 0.0);
        assert_eq!(tau_from_lambda(2.0, 0.5).unwrap(), 1.0);
        for lambda in [0.1, 0.7, 3.0, 12.5] {
            assert_eq!(tau_from_lambda(lambda, 0.5).unwrap(), lambda * lambda / 4.0);
        }
        let generic = (1.3 * 0.3f64.powf(0.3) * 0.7f64.powf(0.7)).powf(1.0 / 0.7);
        assert_abs_diff_eq!(tau_from_lambda(1.3, 0.3).unwrap(), generic, epsilon = 1e-15);
        assert!(tau_from_lambda(1.0, 1.0).is_err());
        assert!(tau_from_lambda(1.0, 0.0).is_err());
    }

    fn m3() -> (NestedGroups, GroupWeights) {
        let mesh = TriangularMesh::new(3, 1.0).unwrap();
        let groups = NestedGroups::new(&mesh);
        let weights = GroupWeights { c: vec![1.0; 4], gamma: 0.5 };
        (groups, weights)
    }

    #[test]
    fn theta_examples() {
        let (groups, weights) = m3();
        assert_eq!(update_theta(&[0.0; 10], &groups, &weights, 1.0).unwrap(), vec![0.0; 4]);
        // only the apex is nonzero: every group has l1 norm 1
        let mut b = vec![0.0; 10];
        b[6] = 1.0;
        assert_eq!(update_theta(&b, &groups, &weights, 1.0).unwrap(), vec![1.0; 4]);
        let b: Vec<f64> = (0..10).map(|k| k as f64 * 0.3 - 1.0).collect();
        let t1 = update_theta(&b, &groups, &weights, 0.7).unwrap();
        let b4: Vec<f64> = b.iter().map(|v| v * 4.0).collect();
        let t4 = update_theta(&b4, &groups, &weights, 0.7).unwrap();
        for (a, c) in t1.iter().zip(&t4) {
            assert_abs_diff_eq!(2.0 * a, *c, epsilon = 1e-12);
        }
        assert!(update_theta(&b, &groups, &weights, 0.0).is_err());
    }

    #[test]
    fn g_examples() {
        let (groups, _) = m3();
        let weights = GroupWeights { c: vec![2.0, 1.5, 1.2, 1.0], gamma: 0.5 };
        let theta = [0.5, 0.25, 2.0, 4.0];
        let g = update_g(&theta, &weights, &groups);
        let terms: Vec<f64> = theta.iter().zip(&weights.c).map(|(t, c)| c * c / t).collect();
        // apex (node 7) appears in all four groups
        assert_abs_diff_eq!(g[6], terms.iter().sum::<f64>(), epsilon = 1e-12);
        // node 10 at (T, T) only in A_1
        assert_abs_diff_eq!(g[9], terms[0], epsilon = 1e-12);
        let dead = update_g(&[0.0, 1.0, 1.0, 1.0], &weights, &groups);
        assert!(dead.iter().all(|v| v.is_infinite()));
        let partly = update_g(&[1.0, 1.0, 0.0, 1.0], &weights, &groups);
        for k in 0..10 {
            assert_eq!(partly[k].is_infinite(), groups.membership()[k] >= 3);
        }
    }

    #[test]
    fn lasso_zero_response() {
        let x = DMatrix::from_fn(8, 3, |i, j| ((i + 2 * j) as f64).cos());
        let sol = lasso(&x, &DVector::zeros(8), LassoOptions::default()).unwrap();
        assert_eq!(sol.x, DVector::zeros(3));
    }

    #[test]
    fn lasso_orthonormal_design_is_soft_thresholding() {
        // columns of a rotation are orthonormal
        let (c, s) = (0.6, 0.8);
        let x = DMatrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0]);
        let y = DVector::from_vec(vec![1.3, -0.2, 0.4]);
        let sol = lasso(&x, &y, LassoOptions::default()).unwrap();
        let xty = x.tr_mul(&y);
        for k in 0..3 {
            assert_abs_diff_eq!(sol.x[k], soft_threshold(xty[k], 0.5), epsilon = 1e-12);
        }
    }

    #[test]
    fn lasso_kkt_on_random_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x = DMatrix::from_fn(30, 8, |_, _| rng.gen_range(-1.0..1.0));
            let y = DVector::from_fn(30, |_, _| rng.gen_range(-2.0..2.0));
            let sol = lasso(&x, &y, LassoOptions::default()).unwrap();
            let grad = -2.0 * x.tr_mul(&(&y - &x * &sol.x));
            for k in 0..8 {
                assert!(kkt_violation(sol.x[k], grad[k]) <= 1e-6 * (1.0 + 2.0 * x.tr_mul(&y).amax()));
            }
        }
    }

    #[test]
    fn rescaled_lasso_pins_infinite_loads() {
        let h = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.5, 0.2, 0.1, 0.2, 1.0]);
        let quad = SmoothQuadratic {
            hessian: h,
            linear: DVector::from_vec(vec![3.0, -2.0, 5.0]),
            subjects: 2,
        };
        let sol = solve_rescaled_lasso(&quad, &[0.1, f64::INFINITY, 0.2], None, LassoOptions::default()).unwrap();
        assert_eq!(sol.b[1], 0.0);
        assert!(sol.b[0] != 0.0 && sol.b[2] != 0.0);
        let none = solve_rescaled_lasso(&quad, &[f64::INFINITY; 3], None, LassoOptions::default()).unwrap();
        assert_eq!(none.b, DVector::zeros(3));
    }

    /// The rescaled problem and the weighted LASSO in `b` share their minimizer:
    /// compare with coordinate descent run directly on `b`.
    #[test]
    fn rescaling_matches_direct_weighted_lasso() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DMatrix::from_fn(40, 6, |_, _| rng.gen_range(-1.0..1.0));
        let y = DVector::from_fn(40, |_, _| rng.gen_range(-3.0..3.0));
        let n = 4usize;
        let g = [0.05, 0.3, 0.01, 2.0, 0.2, 0.08];
        let quad = SmoothQuadratic { hessian: x.tr_mul(&x), linear: x.tr_mul(&y), subjects: n };
        let b = solve_rescaled_lasso(&quad, &g, None, LassoOptions { max_sweeps: 100_000, tol: 1e-12 }).unwrap().b;
        // direct: minimize (1/n)|y - X b|^2 + sum g_k |b_k| by plain coordinate descent
        let mut d = DVector::zeros(6);
        for _ in 0..20_000 {
            for k in 0..6 {
                let col = x.column(k);
                let r = &y - &x * &d + col * d[k];
                let z = col.dot(&r) / n as f64;
                let a = col.norm_squared() / n as f64;
                d[k] = soft_threshold(z, g[k] / 2.0) / a;
            }
        }
        for k in 0..6 {
            assert_abs_diff_eq!(b[k], d[k], epsilon = 1e-8);
        }
    }

    fn toy_problem(seed: u64, omega: f64) -> (DesignSystem, PenaltySystem) {
        let mesh = TriangularMesh::new(3, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 6;
        let q = 5;
        let psi = DMatrix::from_fn(n * q, 10, |_, _| rng.gen_range(-1.0..1.0));
        let truth = DVector::from_fn(10, |k, _| if k % 3 == 0 { 0.0 } else { 1.0 + k as f64 * 0.1 });
        let y = &psi * &truth + DVector::from_fn(n * q, |_, _| rng.gen_range(-0.1..0.1));
        let times = (0..q).map(|i| i as f64 / (q - 1) as f64).collect();
        let design = DesignSystem::from_parts(psi, y, mesh.clone(), times).unwrap();
        let groups = NestedGroups::new(&mesh);
        let weights = compute_weights(&groups, 0.5, None).unwrap();
        let smoothness = SmoothnessPenalty::new(DifferenceMatrices::new(&mesh), Omega::tied(omega)).unwrap();
        (design, PenaltySystem { groups, weights, smoothness })
    }

    #[test]
    fn outer_loop_objective_decreases() {
        for seed in 0..5 {
            let (design, pen) = toy_problem(seed, 0.01);
            let b0 = smooth_solve(&design, &pen.smoothness, &(0..10).collect::<Vec<_>>()).unwrap();
            let cfg = BridgeConfig::with_lambda(0.5);
            let state = fit_group_bridge(&design, &pen, &cfg, &b0).unwrap();
            for w in state.objective_trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-8), "{:?}", state.objective_trace);
            }
        }
    }

    #[test]
    fn huge_lambda_kills_everything() {
        let (design, pen) = toy_problem(3, 0.0);
        let b0 = smooth_solve(&design, &pen.smoothness, &(0..10).collect::<Vec<_>>()).unwrap();
        let state = fit_group_bridge(&design, &pen, &BridgeConfig::with_lambda(1e6), &b0).unwrap();
        assert_eq!(state.b, DVector::zeros(10));
        assert!(state.theta.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn tiny_lambda_stays_at_least_squares() {
        let (design, pen) = toy_problem(4, 0.0);
        let b0 = smooth_solve(&design, &pen.smoothness, &(0..10).collect::<Vec<_>>()).unwrap();
        let ls = design.gram().clone().cholesky().unwrap().solve(design.cross());
        let state = fit_group_bridge(&design, &pen, &BridgeConfig::with_lambda(1e-12), &b0).unwrap();
        assert!((&state.b - &ls).amax() < 1e-4);
    }

    #[test]
    fn zero_lambda_is_the_smooth_fit() {
        let (design, pen) = toy_problem(8, 0.2);
        let all: Vec<usize> = (0..10).collect();
        let smooth = smooth_solve(&design, &pen.smoothness, &all).unwrap();
        let state = fit_group_bridge(&design, &pen, &BridgeConfig::with_lambda(0.0), &DVector::zeros(10)).unwrap();
        assert_eq!(state.b, smooth);
    }

    #[test]
    fn dead_groups_stay_dead() {
        for seed in 0..4 {
            let (design, pen) = toy_problem(seed + 10, 0.05);
            let b0 = smooth_solve(&design, &pen.smoothness, &(0..10).collect::<Vec<_>>()).unwrap();
            let mut cfg = BridgeConfig::with_lambda(2.0);
            cfg.max_outer_iters = 500;
            let state = fit_group_bridge(&design, &pen, &cfg, &b0).unwrap();
            let mut seen = 0;
            for rec in &state.log {
                assert!(rec.dead_groups >= seen);
                seen = rec.dead_groups;
            }
        }
    }

    #[test]
    fn reformulation_agrees_at_optimal_theta() {
        let (design, pen) = toy_problem(21, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for lambda in [0.1, 1.0, 7.0] {
            let tau = tau_from_lambda(lambda, 0.5).unwrap();
            let b = DVector::from_fn(10, |_, _| rng.gen_range(-2.0..2.0));
            let theta = update_theta(b.as_slice(), &pen.groups, &pen.weights, tau).unwrap();
            let a = criterion(&design, &pen, lambda, &b);
            let r = reformulated_criterion(&design, &pen, tau, &b, &theta);
            assert_abs_diff_eq!(a, r, epsilon = 1e-10 * a.abs());
        }
    }
}
