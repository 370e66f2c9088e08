//! State and adjoint sweeps with matvec counting.
//!
//! The adjoint recursion is the transpose of the implicit Euler state
//! recursion, so `<y(T), q> = <y0, p(0)> + dt * sum_j <B v_j, p_{j-1}>`
//! holds to solver tolerance.
//!
//! Run with `cargo run --example forward_backward`.

use std::sync::Arc;

use timesplit::{solve_adjoint, solve_state, ControlField, Grid, Interval, MatvecCounter, SolverOptions, TimeGridSpec};

fn main() -> timesplit::Result<()> {
    let grid = Arc::new(Grid::build(1, &[65], &[Interval::UNIT], &[Interval::new(0.25, 0.5)])?);
    let time = TimeGridSpec::new(0.0, 0.5, 50)?;
    let nu = 0.1;
    let options = SolverOptions { tol: 1e-12, max_iterations: None };

    let y0 = grid.field_from_fn(|x| (-((x[0] - 0.7) / 0.1).powi(2)).exp());
    let v = ControlField::from_fn(&grid, time, |t, x| (6.0 * t).sin() * x[0]);

    let mut counter = MatvecCounter::with_log();
    let y = solve_state(&grid, &time, &y0, &v, nu, &options, &mut counter)?;
    let forward = counter.count();
    let q = grid.field_from_fn(|x| x[0] * (1.0 - x[0]));
    let p = solve_adjoint(&grid, &time, &q, nu, &options, &mut counter)?;
    println!(
        "state sweep: {forward} matvecs, adjoint sweep: {} matvecs, {} CG solves",
        counter.count() - forward,
        counter.log().map_or(0, |log| log.len())
    );

    let lhs = grid.inner_omega(y.last(), &q)?;
    let mut rhs = grid.inner_omega(&y0, p.first())?;
    for j in 1..=time.step_count() {
        rhs += time.dt() * grid.inner_omega(&grid.inject(&v.slice(&grid, j)?)?, p.at(j - 1))?;
    }
    println!("<y(T), q> = {lhs:.14}");
    println!("duality   = {rhs:.14}");
    println!("|y(0)| = {:.4}, |y(T)| = {:.4}", grid.norm_omega(&y0)?, grid.norm_omega(y.last())?);
    Ok(())
}
