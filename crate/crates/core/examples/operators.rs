//! Grids and spatial operators: the five-point Laplacian, the control patch
//! and the weighted inner products.
//!
//! Run with `cargo run --example operators`.

use std::f64::consts::PI;

use timesplit::{Grid, Interval};

fn main() -> timesplit::Result<()> {
    let grid = Grid::build(2, &[17, 17], &[Interval::UNIT; 2], &[Interval::new(1.0 / 3.0, 2.0 / 3.0); 2])?;
    println!(
        "{} interior nodes, spacing {:?}, {} of them on the control patch",
        grid.interior_node_count(),
        grid.spacing(),
        grid.control_len()
    );

    // sin(pi x) sin(2 pi y) is an eigenvector of the discrete Laplacian
    let h = grid.spacing()[0];
    let mode = grid.field_from_fn(|x| (PI * x[0]).sin() * (2.0 * PI * x[1]).sin());
    let lambda = -4.0 / (h * h) * ((PI * h / 2.0).sin().powi(2) + (PI * h).sin().powi(2));
    let applied = grid.laplacian_apply(&mode)?;
    let mut residual = applied.clone();
    residual.axpy(-lambda, &mode)?;
    println!(
        "eigenvalue {lambda:.4} (continuous {:.4}), residual {:.2e}",
        -5.0 * PI * PI,
        grid.norm_omega(&residual)?
    );

    // B* is the transpose of B in the weighted inner products
    let patch = grid.control_slice((0..grid.control_len()).map(|k| (k as f64).cos()).collect())?;
    let injected = grid.inject(&patch)?;
    let lhs = grid.inner_omega(&injected, &mode)?;
    let rhs = grid.inner_control(&patch, &grid.restrict(&mode)?)?;
    println!("<Bc, u> = {lhs:.12}, <c, B*u> = {rhs:.12}");
    Ok(())
}
