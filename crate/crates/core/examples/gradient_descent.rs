//! The optimal-step gradient method on a 1D problem: drive a bump towards
//! an indicator target with control acting on the middle third.
//!
//! Run with `cargo run --example gradient_descent`.

use std::sync::Arc;

use timesplit::{ControlProblem, Grid, Interval, MatvecCounter, StopRule, TimeGridSpec};

fn main() -> timesplit::Result<()> {
    let grid = Arc::new(Grid::build(1, &[49], &[Interval::UNIT], &[Interval::new(1.0 / 3.0, 2.0 / 3.0)])?);
    let time = TimeGridSpec::new(0.0, 1.0, 100)?;
    let y0 = grid.field_from_fn(|x| (-((x[0] - 0.5) / 0.1).powi(2)).exp());
    let target = grid.field_from_fn(|x| if (1.0 / 3.0..=2.0 / 3.0).contains(&x[0]) { 1.0 } else { 0.0 });
    let problem = ControlProblem::new(grid, time, y0, target, 1e-2, 5e-2)?;

    let mut counter = MatvecCounter::new();
    let outcome =
        problem.optimal_step_gradient(&problem.zero_control(), StopRule::tolerance(1e-6, 2000), &mut counter)?;

    println!("iter  J             |grad|        step      matvecs");
    for record in outcome.history.iter().filter(|r| r.iteration % 10 == 0) {
        println!(
            "{:4}  {:.6e}  {:.6e}  {:.4}  {}",
            record.iteration,
            record.cost,
            record.gradient_norm.unwrap_or(f64::NAN),
            record.step,
            record.matvecs
        );
    }
    let last = outcome.history.last().unwrap();
    println!(
        "stopped at iteration {} (converged: {}), J = {:.6e}, {} matvecs",
        last.iteration,
        outcome.converged,
        last.cost,
        counter.count()
    );
    Ok(())
}
