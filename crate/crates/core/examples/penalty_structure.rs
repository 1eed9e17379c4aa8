//! Prints the nested groups, the three difference operators and the adaptive
//! group weights for a small mesh.
//!
//! ```text
//! cargo run --release --example penalty_structure -- [M]
//! ```

use histfun::mesh::TriangularMesh;
use histfun::penalties::{compute_weights, DifferenceMatrices, NestedGroups, Omega, SmoothnessPenalty};

fn main() -> histfun::Result<()> {
    let m: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3);
    let mesh = TriangularMesh::new(m, 1.0)?;
    let groups = NestedGroups::new(&mesh);
    for j in 0..groups.len() {
        let members: Vec<usize> = groups.group(j).iter().map(|k| k + 1).collect();
        println!("A_{} = {members:?}", j + 1);
    }

    let diffs = DifferenceMatrices::new(&mesh);
    for (name, d) in [("horizontal", &diffs.horizontal), ("vertical", &diffs.vertical), ("diagonal", &diffs.diagonal)] {
        println!("{name} differences ({} x {}):{}", d.rows(), d.columns(), d.to_dense());
    }

    let penalty = SmoothnessPenalty::new(diffs, Omega::tied(1.0))?;
    println!("R with unit weights:{}", penalty.r());

    let b0: Vec<f64> = (0..mesh.node_count()).map(|k| 1.0 / (1.0 + k as f64)).collect();
    let weights = compute_weights(&groups, 0.5, Some(&b0))?;
    println!("adaptive weights: {:?}", weights.c);
    Ok(())
}
