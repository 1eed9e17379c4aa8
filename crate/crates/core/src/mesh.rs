//! Uniform P1 triangulation of the lower-triangular domain `0 <= s <= t <= T`.
//!
//! The interval `[0, T]` is cut into `M` equal pieces on both axes and every
//! lattice square is split by the diagonal parallel to `t = s`, giving `M^2`
//! congruent triangles and `K = (M+1)(M+2)/2` nodes. Nodes are numbered from
//! bottom to top and, within a row, from left to right: the row at level
//! `t = j*step` holds the `j + 1` nodes `s = 0, step, ..., j*step`.
//!
//! Indices are zero-based throughout the crate, so the node the literature
//! calls `k` is `k - 1` here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance (in units of `T`) for domain membership checks.
pub const DOMAIN_TOL: f64 = 1e-10;

/// Triangulation of `{0 <= s <= t <= T}` with `M` subdivisions per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangularMesh {
    subdivisions: usize,
    horizon: f64,
    step: f64,
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
}

/// Lattice position `(i, j)` of a node at `(i*step, j*step)`; always `i <= j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticePoint {
    pub i: usize,
    pub j: usize,
}

impl LatticePoint {
    /// Number of lattice steps between the node and the diagonal `t = s`.
    pub fn lag(&self) -> usize {
        self.j - self.i
    }
}

/// Zero-based index of the lattice node `(i, j)`.
#[inline]
pub(crate) fn lattice_index(i: usize, j: usize) -> usize {
    j * (j + 1) / 2 + i
}

impl TriangularMesh {
    pub fn new(subdivisions: usize, horizon: f64) -> Result<Self> {
        if subdivisions == 0 {
            return Err(Error::InvalidConfig("mesh needs at least one subdivision".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "time horizon must be positive and finite, got {horizon}"
            )));
        }
        let m = subdivisions;
        let step = horizon / m as f64;

        let mut nodes = Vec::with_capacity((m + 1) * (m + 2) / 2);
        for j in 0..=m {
            for i in 0..=j {
                nodes.push([i as f64 * step, j as f64 * step]);
            }
        }

        // Band j holds the triangles between t = j*step and t = (j+1)*step,
        // listed left to right. Vertices are stored counterclockwise.
        let mut triangles = Vec::with_capacity(m * m);
        for j in 0..m {
            for i in 0..=j {
                triangles.push([
                    lattice_index(i, j),
                    lattice_index(i + 1, j + 1),
                    lattice_index(i, j + 1),
                ]);
                if i < j {
                    triangles.push([
                        lattice_index(i, j),
                        lattice_index(i + 1, j),
                        lattice_index(i + 1, j + 1),
                    ]);
                }
            }
        }

        Ok(Self {
            subdivisions,
            horizon,
            step,
            nodes,
            triangles,
        })
    }

    /// `M`, the number of subdivisions per axis.
    pub fn subdivisions(&self) -> usize {
        self.subdivisions
    }

    /// `T`, the time horizon.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Lattice spacing `T / M`.
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// `(s, t)` coordinates of node `k` (zero-based).
    pub fn node_coordinates(&self, k: usize) -> Result<(f64, f64)> {
        self.nodes
            .get(k)
            .map(|p| (p[0], p[1]))
            .ok_or(Error::NodeOutOfRange {
                index: k,
                count: self.nodes.len(),
            })
    }

    pub fn lattice_point(&self, k: usize) -> Result<LatticePoint> {
        if k >= self.nodes.len() {
            return Err(Error::NodeOutOfRange {
                index: k,
                count: self.nodes.len(),
            });
        }
        // Largest j with j(j+1)/2 <= k.
        let mut j = (((8 * k + 1) as f64).sqrt() as usize).saturating_sub(1) / 2;
        while lattice_index(0, j + 1) <= k {
            j += 1;
        }
        while lattice_index(0, j) > k {
            j -= 1;
        }
        Ok(LatticePoint {
            i: k - lattice_index(0, j),
            j,
        })
    }

    pub fn contains(&self, s: f64, t: f64) -> bool {
        let tol = DOMAIN_TOL * self.horizon;
        s >= -tol && t <= self.horizon + tol && s <= t + tol
    }

    /// Barycentric weights of `(s, t)` with respect to triangle `tri`, using the
    /// affine extension of the triangle's coordinates (valid outside it too).
    pub(crate) fn barycentric(&self, tri: usize, s: f64, t: f64) -> [f64; 3] {
        let [a, b, c] = self.triangles[tri];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        let det = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
        let wb = ((s - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (t - pa[1])) / det;
        let wc = ((pb[0] - pa[0]) * (t - pa[1]) - (s - pa[0]) * (pb[1] - pa[1])) / det;
        [1.0 - wb - wc, wb, wc]
    }

    /// Index of the triangle containing `(s, t)`. Points on shared edges go to
    /// the lowest-indexed triangle that contains them.
    pub fn locate(&self, s: f64, t: f64) -> Result<usize> {
        if !self.contains(s, t) || !s.is_finite() || !t.is_finite() {
            return Err(Error::OutsideDomain {
                s,
                t,
                horizon: self.horizon,
            });
        }
        let m = self.subdivisions;
        let t = t.clamp(0.0, self.horizon);
        let s = s.clamp(0.0, t);
        let u = s / self.step;
        let v = t / self.step;
        let jc = (v.floor() as usize).min(m - 1);
        let ic = (u.floor() as usize).min(jc);

        let eps = 1e-12;
        let mut best: Option<usize> = None;
        for j in jc.saturating_sub(1)..=jc {
            for i in ic.saturating_sub(1)..=ic.min(j) {
                for tri in self.square_triangles(i, j) {
                    let w = self.barycentric(tri, s, t);
                    if w.iter().all(|&x| x >= -eps) && best.map_or(true, |b| tri < b) {
                        best = Some(tri);
                    }
                }
            }
        }
        best.ok_or(Error::OutsideDomain {
            s,
            t,
            horizon: self.horizon,
        })
    }

    /// Triangles of lattice square `(i, j)` (one when `i == j`).
    fn square_triangles(&self, i: usize, j: usize) -> impl Iterator<Item = usize> {
        // Band j starts after all triangles of lower bands: sum_{r<j} (2r + 1) = j^2.
        let upper = j * j + 2 * i;
        let lower = if i < j { Some(upper + 1) } else { None };
        std::iter::once(upper).chain(lower)
    }

    /// Nodes of the containing triangle and their hat-function values at `(s, t)`.
    pub fn basis_at(&self, s: f64, t: f64) -> Result<[(usize, f64); 3]> {
        let tri = self.locate(s, t)?;
        let t_c = t.clamp(0.0, self.horizon);
        let s_c = s.clamp(0.0, t_c);
        let w = self.barycentric(tri, s_c, t_c);
        let v = self.triangles[tri];
        Ok([
            (v[0], w[0].clamp(0.0, 1.0)),
            (v[1], w[1].clamp(0.0, 1.0)),
            (v[2], w[2].clamp(0.0, 1.0)),
        ])
    }

    /// Tent function `phi_k(s, t)`.
    pub fn eval_basis(&self, k: usize, s: f64, t: f64) -> Result<f64> {
        if k >= self.nodes.len() {
            return Err(Error::NodeOutOfRange {
                index: k,
                count: self.nodes.len(),
            });
        }
        Ok(self
            .basis_at(s, t)?
            .iter()
            .find(|(node, _)| *node == k)
            .map_or(0.0, |&(_, w)| w))
    }

    /// Breakpoints in `s` of every `phi_k(., t)` along the horizontal line at `t`,
    /// restricted to `[0, t]` and sorted.
    pub(crate) fn slice_breakpoints(&self, t: f64) -> Vec<f64> {
        let mut pts = vec![0.0, t];
        for i in 1..=self.subdivisions {
            let x = i as f64 * self.step;
            if x < t {
                pts.push(x);
            }
            let y = t - x;
            if y > 0.0 {
                pts.push(y);
            }
        }
        pts.sort_by(f64::total_cmp);
        pts
    }

    pub fn to_json(&self) -> MeshJson {
        MeshJson {
            m: self.subdivisions,
            t: self.horizon,
            nodes: self.nodes.clone(),
            triangles: self.triangles.clone(),
        }
    }
}

/// Plot/debug representation of a mesh.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshJson {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "T")]
    pub t: f64,
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
}

/// Basis coefficients over a mesh: `beta(s, t) = sum_k b_k phi_k(s, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSurface {
    mesh: TriangularMesh,
    coefficients: Vec<f64>,
}

impl CoefficientSurface {
    pub fn new(mesh: TriangularMesh, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != mesh.node_count() {
            return Err(Error::Dimension(format!(
                "surface has {} coefficients but mesh has {} nodes",
                coefficients.len(),
                mesh.node_count()
            )));
        }
        Ok(Self { mesh, coefficients })
    }

    pub fn zeros(mesh: TriangularMesh) -> Self {
        let k = mesh.node_count();
        Self {
            mesh,
            coefficients: vec![0.0; k],
        }
    }

    pub fn mesh(&self) -> &TriangularMesh {
        &self.mesh
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn eval(&self, s: f64, t: f64) -> Result<f64> {
        Ok(self
            .mesh
            .basis_at(s, t)?
            .iter()
            .map(|&(k, w)| self.coefficients[k] * w)
            .sum())
    }

    /// Dense `n x n` grid over `[0, T]^2`; points above the diagonal `s > t`
    /// are reported as zero.
    pub fn dense_grid(&self, n: usize) -> Vec<(f64, f64, f64)> {
        let horizon = self.mesh.horizon();
        let denom = (n.max(2) - 1) as f64;
        let mut out = Vec::with_capacity(n * n);
        for a in 0..n {
            let s = horizon * a as f64 / denom;
            for b in 0..n {
                let t = horizon * b as f64 / denom;
                let v = if s <= t { self.eval(s, t).unwrap_or(0.0) } else { 0.0 };
                out.push((s, t, v));
            }
        }
        out
    }
}
