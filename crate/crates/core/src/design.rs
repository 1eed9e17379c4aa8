//! Functional samples, centering and the stacked design system.
//!
//! Curves are treated as piecewise linear between their grid points. The
//! design entries `psi_ik(t) = int_0^t x_i(s) phi_k(s, t) ds` are computed in
//! closed form: along a horizontal slice of the mesh every tent function is
//! piecewise linear in `s`, so on each piece the integrand is a product of two
//! linear functions.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::TriangularMesh;

/// What a sample represents in the regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleRole {
    Covariate,
    Response,
}

/// `N` curves observed on a shared ascending grid over `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSample {
    grid: Vec<f64>,
    values: DMatrix<f64>,
    role: SampleRole,
}

impl FunctionalSample {
    /// `values` is `N x grid.len()`, one curve per row.
    pub fn new(grid: Vec<f64>, values: DMatrix<f64>, role: SampleRole) -> Result<Self> {
        if grid.len() < 2 {
            return Err(Error::InvalidConfig("grid needs at least two points".into()));
        }
        if grid[0].abs() > 1e-12 * grid[grid.len() - 1].abs().max(1.0) {
            return Err(Error::InvalidConfig(format!("grid must start at 0, got {}", grid[0])));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidConfig("grid must be strictly ascending".into()));
        }
        if values.ncols() != grid.len() {
            return Err(Error::Dimension(format!(
                "curves have {} columns but the grid has {} points",
                values.ncols(),
                grid.len()
            )));
        }
        if values.nrows() == 0 {
            return Err(Error::Dimension("sample has no curves".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse("sample contains non-finite values".into()));
        }
        let mut grid = grid;
        grid[0] = 0.0;
        Ok(Self { grid, values, role })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn role(&self) -> SampleRole {
        self.role
    }

    pub fn curve_count(&self) -> usize {
        self.values.nrows()
    }

    /// `T`, the last grid point.
    pub fn horizon(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    pub fn curve(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    pub fn same_grid(&self, other: &FunctionalSample) -> bool {
        let scale = self.horizon().abs().max(1.0);
        self.grid.len() == other.grid.len()
            && self
                .grid
                .iter()
                .zip(&other.grid)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * scale)
    }

    /// Reads the CSV layout used throughout the crate: the first row holds the
    /// grid times, each following row one curve.
    pub fn read_csv(path: impl AsRef<Path>, role: SampleRole) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_path(path)?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let row = record
                .iter()
                .map(|f| {
                    f.parse::<f64>().map_err(|_| {
                        Error::Parse(format!("{}: line {}: bad number {f:?}", path.display(), line + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        if rows.len() < 2 {
            return Err(Error::Parse(format!(
                "{}: need a grid row and at least one curve",
                path.display()
            )));
        }
        let grid = rows.remove(0);
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != grid.len()) {
            return Err(Error::Dimension(format!(
                "{}: curve {} has {} values but the grid has {}",
                path.display(),
                i + 1,
                row.len(),
                grid.len()
            )));
        }
        let n = rows.len();
        let values = DMatrix::from_fn(n, grid.len(), |i, q| rows[i][q]);
        Self::new(grid, values, role)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
        writer.write_record(self.grid.iter().map(|v| format_float(*v)))?;
        for i in 0..self.values.nrows() {
            writer.write_record(self.values.row(i).iter().map(|v| format_float(*v)))?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn format_float(v: f64) -> String {
    format!("{v:?}")
}

/// Pointwise-centered sample and the mean curve that was removed.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredData {
    pub centered: FunctionalSample,
    pub mean_curve: Vec<f64>,
}

pub fn center(sample: &FunctionalSample) -> Result<CenteredData> {
    let n = sample.curve_count();
    if n < 2 {
        return Err(Error::InvalidConfig(format!("centering needs at least two curves, got {n}")));
    }
    let mean: Vec<f64> = sample
        .values
        .column_iter()
        .map(|col| col.iter().sum::<f64>() / n as f64)
        .collect();
    let values = DMatrix::from_fn(n, sample.grid.len(), |i, q| sample.values[(i, q)] - mean[q]);
    Ok(CenteredData {
        centered: FunctionalSample {
            grid: sample.grid.clone(),
            values,
            role: sample.role,
        },
        mean_curve: mean,
    })
}

/// Linear interpolation of `(grid, values)` at `s`; `s` must lie in the grid range.
pub(crate) fn interpolate(grid: &[f64], values: &[f64], s: f64) -> f64 {
    let last = grid.len() - 1;
    if s <= grid[0] {
        return values[0];
    }
    if s >= grid[last] {
        return values[last];
    }
    let hi = grid.partition_point(|&g| g <= s).min(last);
    let lo = hi - 1;
    let w = (s - grid[lo]) / (grid[hi] - grid[lo]);
    values[lo] + w * (values[hi] - values[lo])
}

/// `psi_k(t) = int_0^t x(s) phi_k(s, t) ds` for every node `k`, exact for
/// piecewise-linear `x`.
pub fn compute_psi(mesh: &TriangularMesh, grid: &[f64], x: &[f64], t_eval: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; mesh.node_count()];
    accumulate_psi(mesh, grid, x, t_eval, &mut out)?;
    Ok(out)
}

pub(crate) fn accumulate_psi(
    mesh: &TriangularMesh,
    grid: &[f64],
    x: &[f64],
    t_eval: f64,
    out: &mut [f64],
) -> Result<()> {
    let horizon = mesh.horizon();
    let tol = crate::mesh::DOMAIN_TOL * horizon;
    if !(t_eval >= -tol && t_eval <= horizon + tol) {
        return Err(Error::OutsideDomain {
            s: 0.0,
            t: t_eval,
            horizon,
        });
    }
    if grid.len() != x.len() {
        return Err(Error::Dimension("curve and grid lengths differ".into()));
    }
    let t = t_eval.clamp(0.0, horizon);
    if t == 0.0 {
        return Ok(());
    }
    let mut pts = mesh.slice_breakpoints(t);
    pts.extend(grid.iter().copied().filter(|&g| g > 0.0 && g < t));
    pts.sort_by(f64::total_cmp);
    let min_len = 1e-14 * horizon;
    pts.dedup_by(|a, b| (*a - *b).abs() <= min_len);

    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = b - a;
        if len <= min_len {
            continue;
        }
        let tri = mesh.locate(0.5 * (a + b), t)?;
        let nodes = mesh.triangles()[tri];
        let wa = mesh.barycentric(tri, a, t);
        let wb = mesh.barycentric(tri, b, t);
        let xa = interpolate(grid, x, a);
        let xb = interpolate(grid, x, b);
        for v in 0..3 {
            // int_a^b of the product of two linear functions, by its exact
            // Simpson-type weights.
            out[nodes[v]] += len / 6.0
                * (2.0 * xa * wa[v] + xa * wb[v] + xb * wa[v] + 2.0 * xb * wb[v]);
        }
    }
    Ok(())
}

/// Stacked least-squares system `y ~ Psi b` with rows ordered subject-major,
/// time-minor.
#[derive(Debug, Clone)]
pub struct DesignSystem {
    psi: Arc<DMatrix<f64>>,
    gram: Arc<DMatrix<f64>>,
    y: DVector<f64>,
    cross: DVector<f64>,
    mesh: TriangularMesh,
    eval_times: Vec<f64>,
    subjects: usize,
}

impl DesignSystem {
    /// Builds a system from an explicit design matrix. Rows must be stacked
    /// subject-major with `eval_times.len()` rows per subject.
    pub fn from_parts(
        psi: DMatrix<f64>,
        y: DVector<f64>,
        mesh: TriangularMesh,
        eval_times: Vec<f64>,
    ) -> Result<Self> {
        let q = eval_times.len();
        if q == 0 {
            return Err(Error::InvalidConfig("no evaluation times".into()));
        }
        if psi.ncols() != mesh.node_count() {
            return Err(Error::Dimension(format!(
                "design has {} columns, mesh has {} nodes",
                psi.ncols(),
                mesh.node_count()
            )));
        }
        if psi.nrows() != y.len() || psi.nrows() % q != 0 || psi.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "design has {} rows, response {} entries, {} times per subject",
                psi.nrows(),
                y.len(),
                q
            )));
        }
        let subjects = psi.nrows() / q;
        let gram = psi.tr_mul(&psi);
        let cross = psi.tr_mul(&y);
        Ok(Self {
            psi: Arc::new(psi),
            gram: Arc::new(gram),
            y,
            cross,
            mesh,
            eval_times,
            subjects,
        })
    }

    /// Same design, different stacked response.
    pub fn with_response(&self, y: DVector<f64>) -> Result<Self> {
        if y.len() != self.y.len() {
            return Err(Error::Dimension(format!(
                "response has {} entries, design has {} rows",
                y.len(),
                self.y.len()
            )));
        }
        let cross = self.psi.tr_mul(&y);
        Ok(Self {
            psi: Arc::clone(&self.psi),
            gram: Arc::clone(&self.gram),
            y,
            cross,
            mesh: self.mesh.clone(),
            eval_times: self.eval_times.clone(),
            subjects: self.subjects,
        })
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    /// `Psi^T Psi`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `Psi^T y`.
    pub fn cross(&self) -> &DVector<f64> {
        &self.cross
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn mesh(&self) -> &TriangularMesh {
        &self.mesh
    }

    pub fn eval_times(&self) -> &[f64] {
        &self.eval_times
    }

    /// `N`, the number of subjects.
    pub fn subjects(&self) -> usize {
        self.subjects
    }

    pub fn times_per_subject(&self) -> usize {
        self.eval_times.len()
    }

    pub fn residuals(&self, b: &DVector<f64>) -> DVector<f64> {
        &self.y - &*self.psi * b
    }

    pub fn rss(&self, b: &DVector<f64>) -> f64 {
        self.residuals(b).norm_squared()
    }

    /// Reshapes a stacked vector into an `N x Q'` matrix.
    pub fn unstack(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let q = self.times_per_subject();
        DMatrix::from_fn(self.subjects, q, |i, j| v[i * q + j])
    }

    pub fn stack(&self, m: &DMatrix<f64>) -> DVector<f64> {
        let q = self.times_per_subject();
        DVector::from_fn(self.subjects * q, |r, _| m[(r / q, r % q)])
    }
}

/// Assembles `Psi` and `y` from centered covariates and responses.
/// `eval_times` defaults to the response grid.
pub fn assemble(
    x: &CenteredData,
    y: &CenteredData,
    mesh: &TriangularMesh,
    eval_times: Option<&[f64]>,
) -> Result<DesignSystem> {
    let xs = &x.centered;
    let ys = &y.centered;
    if !xs.same_grid(ys) {
        return Err(Error::GridMismatch("covariate and response grids differ".into()));
    }
    if xs.curve_count() != ys.curve_count() {
        return Err(Error::Dimension(format!(
            "{} covariate curves but {} response curves",
            xs.curve_count(),
            ys.curve_count()
        )));
    }
    let scale = mesh.horizon().max(1.0);
    if (xs.horizon() - mesh.horizon()).abs() > 1e-9 * scale {
        return Err(Error::GridMismatch(format!(
            "sample horizon {} differs from mesh horizon {}",
            xs.horizon(),
            mesh.horizon()
        )));
    }
    let times: Vec<f64> = eval_times.map_or_else(|| ys.grid().to_vec(), <[f64]>::to_vec);
    if times.is_empty() {
        return Err(Error::InvalidConfig("empty evaluation times".into()));
    }
    let n = xs.curve_count();
    let q = times.len();
    let k = mesh.node_count();

    let blocks: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = xs.curve(i);
            let yi = ys.curve(i);
            let mut rows = vec![0.0; q * k];
            let mut resp = Vec::with_capacity(q);
            for (r, &t) in times.iter().enumerate() {
                accumulate_psi(mesh, xs.grid(), &xi, t, &mut rows[r * k..(r + 1) * k])?;
                resp.push(interpolate(ys.grid(), &yi, t));
            }
            Ok((rows, resp))
        })
        .collect::<Result<_>>()?;

    let mut psi = DMatrix::zeros(n * q, k);
    let mut yv = DVector::zeros(n * q);
    for (i, (rows, resp)) in blocks.into_iter().enumerate() {
        for r in 0..q {
            for c in 0..k {
                psi[(i * q + r, c)] = rows[r * k + c];
            }
            yv[i * q + r] = resp[r];
        }
    }
    log::debug!("assembled design: {} rows x {} columns ({} subjects)", n * q, k, n);
    DesignSystem::from_parts(psi, yv, mesh.clone(), times)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(n: usize, horizon: f64) -> Vec<f64> {
        (0..n).map(|i| horizon * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn center_two_constant_curves() {
        let g = grid(4, 1.0);
        let v = DMatrix::from_row_slice(2, 4, &[0.0, 0.0, 0.0, 0.0, 2.0, 2.0, 2.0, 2.0]);
        let s = FunctionalSample::new(g, v, SampleRole::Response).unwrap();
        let c = center(&s).unwrap();
        assert_eq!(c.mean_curve, vec![1.0; 4]);
        assert_eq!(c.centered.values().row(0).iter().copied().collect::<Vec<_>>(), vec![-1.0; 4]);
        assert_eq!(c.centered.values().row(1).iter().copied().collect::<Vec<_>>(), vec![1.0; 4]);
        // idempotent on centered input
        let again = center(&c.centered).unwrap();
        assert_eq!(again.mean_curve, vec![0.0; 4]);
        assert_eq!(again.centered, c.centered);
    }

    #[test]
    fn center_random_matrix_has_zero_columns() {
        let g = grid(7, 2.0);
        let v = DMatrix::from_fn(5, 7, |i, j| ((i * 7 + j) as f64 * 1.37).sin() * 3.0 + i as f64);
        let c = center(&FunctionalSample::new(g, v, SampleRole::Covariate).unwrap()).unwrap();
        for col in c.centered.values().column_iter() {
            assert!(col.sum().abs() <= 1e-12);
        }
    }

    #[test]
    fn center_needs_two_curves() {
        let s = FunctionalSample::new(grid(3, 1.0), DMatrix::zeros(1, 3), SampleRole::Covariate).unwrap();
        assert!(center(&s).is_err());
    }

    #[test]
    fn sample_validation() {
        assert!(FunctionalSample::new(vec![0.0, 0.5, 0.5], DMatrix::zeros(1, 3), SampleRole::Covariate).is_err());
        assert!(FunctionalSample::new(vec![0.1, 0.5, 1.0], DMatrix::zeros(1, 3), SampleRole::Covariate).is_err());
        assert!(FunctionalSample::new(vec![0.0, 0.5, 1.0], DMatrix::zeros(1, 2), SampleRole::Covariate).is_err());
    }

    #[test]
    fn psi_of_zero_curve_is_zero() {
        let mesh = TriangularMesh::new(4, 1.0).unwrap();
        let g = grid(11, 1.0);
        let psi = compute_psi(&mesh, &g, &vec![0.0; 11], 0.73).unwrap();
        assert!(psi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn psi_unit_curve_on_single_triangle() {
        let mesh = TriangularMesh::new(1, 1.0).unwrap();
        let psi = compute_psi(&mesh, &[0.0, 1.0], &[1.0, 1.0], 1.0).unwrap();
        assert_abs_diff_eq!(psi[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(psi[1], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(psi[2], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn psi_rejects_times_outside_horizon() {
        let mesh = TriangularMesh::new(2, 1.0).unwrap();
        assert!(compute_psi(&mesh, &[0.0, 1.0], &[1.0, 1.0], 1.5).is_err());
        assert!(compute_psi(&mesh, &[0.0, 1.0], &[1.0, 1.0], -0.1).is_err());
    }

    #[test]
    fn psi_vanishes_for_nodes_above_the_slice() {
        let mesh = TriangularMesh::new(6, 1.0).unwrap();
        let g = grid(31, 1.0);
        let x: Vec<f64> = g.iter().map(|s| 1.0 + s * s).collect();
        let t = 0.41;
        let psi = compute_psi(&mesh, &g, &x, t).unwrap();
        for (k, p) in mesh.nodes().iter().enumerate() {
            // support of node k spans t in (t_k - step, t_k + step)
            if p[1] - mesh.step() >= t {
                assert_eq!(psi[k], 0.0, "node {k}");
            }
        }
    }

    #[test]
    fn assemble_shapes_and_zero_block() {
        let mesh = TriangularMesh::new(3, 1.0).unwrap();
        let g = grid(3, 1.0);
        let xv = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.5, -1.0, 0.0, 0.3]);
        let yv = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 2.0, 1.0, 0.0, -1.0]);
        let xs = FunctionalSample::new(g.clone(), xv, SampleRole::Covariate).unwrap();
        let ys = FunctionalSample::new(g, yv, SampleRole::Response).unwrap();
        // Wrap without centering to keep subject 0 visible.
        let xc = CenteredData { centered: xs.clone(), mean_curve: vec![0.0; 3] };
        let yc = CenteredData { centered: ys, mean_curve: vec![0.0; 3] };
        let d = assemble(&xc, &yc, &mesh, None).unwrap();
        assert_eq!(d.psi().shape(), (6, 10));
        assert_eq!(d.subjects(), 2);
        // t = 0 rows vanish
        assert!(d.psi().row(0).iter().all(|&v| v == 0.0));
        assert!(d.psi().row(3).iter().all(|&v| v == 0.0));

        let zero_x = FunctionalSample::new(
            xs.grid().to_vec(),
            DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 0.0, -1.0, 0.0, 0.3]),
            SampleRole::Covariate,
        )
        .unwrap();
        let xz = CenteredData { centered: zero_x, mean_curve: vec![0.0; 3] };
        let d0 = assemble(&xz, &yc, &mesh, None).unwrap();
        for r in 0..3 {
            assert!(d0.psi().row(r).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn assemble_rejects_mismatched_grids() {
        let mesh = TriangularMesh::new(2, 1.0).unwrap();
        let xs = FunctionalSample::new(grid(3, 1.0), DMatrix::zeros(2, 3), SampleRole::Covariate).unwrap();
        let ys = FunctionalSample::new(grid(4, 1.0), DMatrix::zeros(2, 4), SampleRole::Response).unwrap();
        let xc = center(&xs).unwrap();
        let yc = center(&ys).unwrap();
        assert!(matches!(assemble(&xc, &yc, &mesh, None), Err(Error::GridMismatch(_))));
        let ys3 = center(&FunctionalSample::new(grid(3, 1.0), DMatrix::zeros(2, 3), SampleRole::Response).unwrap()).unwrap();
        assert!(assemble(&xc, &ys3, &mesh, Some(&[])).is_err());
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let s = FunctionalSample::new(
            grid(5, 0.64),
            DMatrix::from_fn(3, 5, |i, j| (i as f64 + 0.1) * (j as f64).cos()),
            SampleRole::Covariate,
        )
        .unwrap();
        s.write_csv(&path).unwrap();
        let back = FunctionalSample::read_csv(&path, SampleRole::Covariate).unwrap();
        assert_eq!(back, s);

        std::fs::write(&path, "0,0.5,1\n1,2\n").unwrap();
        let err = FunctionalSample::read_csv(&path, SampleRole::Covariate).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)), "{err:?}");
        std::fs::write(&path, "0,0.5,1\n1,abc,2\n").unwrap();
        assert!(FunctionalSample::read_csv(&path, SampleRole::Covariate).is_err());
    }
}
