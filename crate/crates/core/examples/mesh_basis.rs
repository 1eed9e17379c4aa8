//! Builds the triangular mesh, evaluates the tent basis and integrates one
//! covariate curve against it.
//!
//! ```text
//! cargo run --release --example mesh_basis -- [M]
//! ```

use histfun::design::compute_psi;
use histfun::mesh::TriangularMesh;

fn main() -> histfun::Result<()> {
    let m: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3);
    let mesh = TriangularMesh::new(m, 1.0)?;
    println!("M={m}  step={}  nodes={}  triangles={}", mesh.step(), mesh.node_count(), mesh.triangles().len());
    for k in 0..mesh.node_count().min(12) {
        let (s, t) = mesh.node_coordinates(k)?;
        let lp = mesh.lattice_point(k)?;
        println!("  node {k:>3}  (s, t) = ({s:.3}, {t:.3})  lattice ({}, {})  lag steps {}", lp.i, lp.j, lp.lag());
    }

    let (s, t) = (0.2, 0.55);
    let weights = mesh.basis_at(s, t)?;
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    println!("basis at ({s}, {t}): {weights:?}  sum {total}");

    let grid: Vec<f64> = (0..101).map(|q| q as f64 / 100.0).collect();
    let x: Vec<f64> = grid.iter().map(|&s| (6.0 * s).sin() + 0.5).collect();
    let psi = compute_psi(&mesh, &grid, &x, 0.8)?;
    println!("psi(t = 0.8) = {:?}", psi.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>());
    Ok(())
}
