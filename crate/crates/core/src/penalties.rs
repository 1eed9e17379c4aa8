//! Nested groups, group weights and the directional difference penalty.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{lattice_index, TriangularMesh};

/// The decreasing node groups `A_1 > A_2 > ... > A_{M+1}`.
///
/// Group `j` (zero-based here, so `groups[0]` is `A_1`) holds the nodes with
/// `t - s >= j * step`, i.e. the nodes inside the upper-left triangle with
/// vertices `(0, T)`, `(0, j*step)` and `((M - j)*step, T)`. The last group is
/// the apex `(0, T)` alone.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedGroups {
    groups: Vec<Vec<usize>>,
    membership: Vec<usize>,
    regions: Vec<Vec<[f64; 2]>>,
}

impl NestedGroups {
    pub fn new(mesh: &TriangularMesh) -> Self {
        let m = mesh.subdivisions();
        let horizon = mesh.horizon();
        let step = mesh.step();
        let mut groups = vec![Vec::new(); m + 1];
        let mut membership = vec![0; mesh.node_count()];
        for j in 0..=m {
            for i in 0..=j {
                let k = lattice_index(i, j);
                let lag = j - i;
                membership[k] = lag + 1;
                for g in groups.iter_mut().take(lag + 1) {
                    g.push(k);
                }
            }
        }
        let regions = (0..=m)
            .map(|g| {
                if g == m {
                    vec![[0.0, horizon]]
                } else {
                    vec![
                        [0.0, horizon],
                        [0.0, g as f64 * step],
                        [(m - g) as f64 * step, horizon],
                    ]
                }
            })
            .collect();
        Self {
            groups,
            membership,
            regions,
        }
    }

    /// Number of groups, `M + 1`.
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group(&self, j: usize) -> &[usize] {
        &self.groups[j]
    }

    /// `l(k)`: how many groups contain node `k`.
    pub fn membership(&self) -> &[usize] {
        &self.membership
    }

    /// Vertices of the region covered by each group (a single point for the last).
    pub fn regions(&self) -> &[Vec<[f64; 2]>] {
        &self.regions
    }

    pub fn l1_norm(&self, j: usize, b: &[f64]) -> f64 {
        self.groups[j].iter().map(|&k| b[k].abs()).sum()
    }

    pub fn l2_norm(&self, j: usize, b: &[f64]) -> f64 {
        self.groups[j].iter().map(|&k| b[k] * b[k]).sum::<f64>().sqrt()
    }
}

/// A first-difference operator: each row is `b[plus] - b[minus]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DifferenceMatrix {
    pairs: Vec<(usize, usize)>,
    columns: usize,
}

impl DifferenceMatrix {
    /// Rows as `(minus, plus)` node pairs; `minus < plus`.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn rows(&self) -> usize {
        self.pairs.len()
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn apply(&self, b: &[f64]) -> Vec<f64> {
        self.pairs.iter().map(|&(lo, hi)| b[hi] - b[lo]).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.pairs.len(), self.columns);
        for (r, &(lo, hi)) in self.pairs.iter().enumerate() {
            d[(r, lo)] = -1.0;
            d[(r, hi)] = 1.0;
        }
        d
    }

    /// `D^T D`, accumulated without forming `D`.
    pub fn gram(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.columns, self.columns);
        for &(lo, hi) in &self.pairs {
            g[(lo, lo)] += 1.0;
            g[(hi, hi)] += 1.0;
            g[(lo, hi)] -= 1.0;
            g[(hi, lo)] -= 1.0;
        }
        g
    }
}

/// Horizontal, vertical and diagonal difference matrices of a mesh.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DifferenceMatrices {
    pub horizontal: DifferenceMatrix,
    pub vertical: DifferenceMatrix,
    pub diagonal: DifferenceMatrix,
}

impl DifferenceMatrices {
    /// Rows pair lattice neighbours `(s, t) -> (s + step, t)`, `(s, t + step)` and
    /// `(s + step, t + step)`, ordered by the lower node index.
    pub fn new(mesh: &TriangularMesh) -> Self {
        let m = mesh.subdivisions();
        let k = mesh.node_count();
        let mut h = Vec::new();
        let mut v = Vec::new();
        let mut p = Vec::new();
        for j in 0..=m {
            for i in 0..=j {
                let here = lattice_index(i, j);
                if i < j {
                    h.push((here, lattice_index(i + 1, j)));
                }
                if j < m {
                    v.push((here, lattice_index(i, j + 1)));
                    p.push((here, lattice_index(i + 1, j + 1)));
                }
            }
        }
        let make = |pairs| DifferenceMatrix { pairs, columns: k };
        Self {
            horizontal: make(h),
            vertical: make(v),
            diagonal: make(p),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &DifferenceMatrix> {
        [&self.horizontal, &self.vertical, &self.diagonal].into_iter()
    }
}

/// Nonnegative weights of the horizontal, vertical and diagonal differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Omega {
    pub horizontal: f64,
    pub vertical: f64,
    pub diagonal: f64,
}

impl Omega {
    pub fn tied(w: f64) -> Self {
        Self {
            horizontal: w,
            vertical: w,
            diagonal: w,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.horizontal, self.vertical, self.diagonal]
    }

    fn validate(&self) -> Result<()> {
        if self.as_array().iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidConfig(format!(
                "smoothness weights must be nonnegative, got {:?}",
                self.as_array()
            )));
        }
        Ok(())
    }
}

/// `R = w_H D_H^T D_H + w_V D_V^T D_V + w_P D_P^T D_P`.
pub fn assemble_r(diffs: &DifferenceMatrices, omega: Omega) -> Result<DMatrix<f64>> {
    omega.validate()?;
    let k = diffs.horizontal.columns();
    let mut r = DMatrix::zeros(k, k);
    for (d, w) in diffs.iter().zip(omega.as_array()) {
        if w > 0.0 {
            r += d.gram() * w;
        }
    }
    Ok(r)
}

/// Difference operators together with their weights and the assembled `R`.
#[derive(Debug, Clone)]
pub struct SmoothnessPenalty {
    pub diffs: DifferenceMatrices,
    pub omega: Omega,
    r: DMatrix<f64>,
}

impl SmoothnessPenalty {
    pub fn new(diffs: DifferenceMatrices, omega: Omega) -> Result<Self> {
        let r = assemble_r(&diffs, omega)?;
        Ok(Self { diffs, omega, r })
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// `b^T R b`.
    pub fn quadratic(&self, b: &[f64]) -> f64 {
        self.diffs
            .iter()
            .zip(self.omega.as_array())
            .map(|(d, w)| w * d.apply(b).iter().map(|x| x * x).sum::<f64>())
            .sum()
    }

    /// `R` built only from difference rows whose two endpoints are both in
    /// `active`; rows and columns follow the order of `active`.
    pub fn restricted(&self, active: &[usize]) -> DMatrix<f64> {
        let k = self.diffs.horizontal.columns();
        let mut pos = vec![usize::MAX; k];
        for (p, &node) in active.iter().enumerate() {
            pos[node] = p;
        }
        let n = active.len();
        let mut r = DMatrix::zeros(n, n);
        for (d, w) in self.diffs.iter().zip(self.omega.as_array()) {
            if w == 0.0 {
                continue;
            }
            for &(lo, hi) in d.pairs() {
                let (a, b) = (pos[lo], pos[hi]);
                if a == usize::MAX || b == usize::MAX {
                    continue;
                }
                r[(a, a)] += w;
                r[(b, b)] += w;
                r[(a, b)] -= w;
                r[(b, a)] -= w;
            }
        }
        r
    }
}

/// Group weights `c_j` and the bridge exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupWeights {
    pub c: Vec<f64>,
    pub gamma: f64,
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidConfig(format!("bridge exponent must lie in (0, 1), got {gamma}")));
    }
    Ok(())
}

/// Simple weights `|A_j|^(1-gamma)` without `b0`, adaptive weights
/// `|A_j|^(1-gamma) / ||b0_{A_j}||_2^gamma` with it.
pub fn compute_weights(groups: &NestedGroups, gamma: f64, b0: Option<&[f64]>) -> Result<GroupWeights> {
    check_gamma(gamma)?;
    let mut c = Vec::with_capacity(groups.len());
    for (j, g) in groups.groups().iter().enumerate() {
        let base = (g.len() as f64).powf(1.0 - gamma);
        let w = match b0 {
            None => base,
            Some(b0) => {
                let norm = groups.l2_norm(j, b0);
                if !(norm > 0.0) || !norm.is_finite() {
                    return Err(Error::ZeroGroupNorm { group: j + 1 });
                }
                base / norm.powf(gamma)
            }
        };
        c.push(w);
    }
    Ok(GroupWeights { c, gamma })
}

/// Everything the bridge solver needs besides the data.
#[derive(Debug, Clone)]
pub struct PenaltySystem {
    pub groups: NestedGroups,
    pub weights: GroupWeights,
    pub smoothness: SmoothnessPenalty,
}
