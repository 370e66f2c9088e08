//! Solves a small instance exactly through its normal equations and checks
//! the iterative baseline against it.
//!
//! Run with `cargo run --example dense_oracle`.

use std::sync::Arc;

use timesplit::{oracle_kkt_solve, ControlProblem, Grid, Interval, MatvecCounter, SolverOptions, StopRule, TimeGridSpec};

fn main() -> timesplit::Result<()> {
    let grid = Arc::new(Grid::build(1, &[11], &[Interval::UNIT], &[Interval::new(0.2, 0.8)])?);
    let time = TimeGridSpec::new(0.0, 0.5, 20)?;
    let y0 = grid.field_from_fn(|x| (std::f64::consts::PI * x[0]).sin());
    let target = grid.field_from_fn(|x| x[0] * (1.0 - x[0]));
    let problem = ControlProblem::new(grid.clone(), time, y0, target, 0.05, 0.2)?
        .with_solver(SolverOptions { tol: 1e-13, max_iterations: None });

    let oracle = oracle_kkt_solve(&problem)?;
    println!("{} unknowns, optimal J = {:.12e}", oracle.control.values().len(), oracle.cost);

    let outcome = problem.optimal_step_gradient(
        &problem.zero_control(),
        StopRule::tolerance(1e-8, 100_000),
        &mut MatvecCounter::new(),
    )?;
    let gap = outcome.control.sub(&oracle.control)?.norm_h(&grid)?;
    println!(
        "baseline: {} iterations, J = {:.12e}, |v - v*|_H = {gap:.2e}",
        outcome.history.len() - 1,
        outcome.final_cost()
    );
    Ok(())
}
