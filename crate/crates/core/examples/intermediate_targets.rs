//! The intermediate-targets method step by step, then a full run compared
//! with the optimal-step gradient baseline.
//!
//! Run with `cargo run --release --example intermediate_targets`.

use std::sync::Arc;

use timesplit::{
    assemble_subproblems, make_partition, run, solve_subproblem, target_trajectory, ControlField, ControlProblem, Grid,
    Interval, MatvecCounter, OuterConfig, StopRule, TimeGridSpec,
};

fn main() -> timesplit::Result<()> {
    let grid = Arc::new(Grid::build(1, &[49], &[Interval::UNIT], &[Interval::new(1.0 / 3.0, 2.0 / 3.0)])?);
    let time = TimeGridSpec::new(0.0, 2.0, 200)?;
    let y0 = grid.field_from_fn(|x| (-((x[0] - 0.5) / 0.1).powi(2)).exp());
    let target = grid.field_from_fn(|x| if (1.0 / 3.0..=2.0 / 3.0).contains(&x[0]) { 1.0 } else { 0.0 });
    let problem = ControlProblem::new(grid, time, y0, target, 1e-2, 1e-2)?;

    // one outer iteration by hand from v = 0
    let partition = make_partition(&time, 4)?;
    println!("breakpoints {:?}", partition.breakpoints());
    let v = problem.zero_control();
    let mut counter = MatvecCounter::new();
    let targets = target_trajectory(&problem, &v, &partition, &mut counter)?;
    let mut pieces = Vec::new();
    for sub in assemble_subproblems(&problem, &v, &partition, &targets)? {
        let mut local = MatvecCounter::new();
        let solved = solve_subproblem(&sub, StopRule::iterations(1), &mut local)?;
        let window = sub.problem().time_spec();
        println!(
            "window {} [{:.2}, {:.2}]: local J {:.4e} -> {:.4e}, {} matvecs",
            sub.index(),
            window.t_start(),
            window.t_end(),
            sub.problem().evaluate(sub.warm_start(), &mut MatvecCounter::new())?.cost,
            sub.problem().evaluate(&solved, &mut MatvecCounter::new())?.cost,
            local.count()
        );
        pieces.push(solved);
    }
    let glued = ControlField::concatenate(time, &pieces)?;
    let direction = glued.sub(&v)?;
    let theta = timesplit::line_search_theta(&problem, &v, &direction, &mut counter)?;
    println!("theta = {theta:.4}");

    // full runs
    let config = OuterConfig { windows: 8, max_outer: 2000, worker_count: 4, ..OuterConfig::default() };
    let parallel = run(&problem, config)?;
    let last = parallel.history.last().unwrap();
    println!(
        "intermediate targets, N = 8: {} iterations, J = {:.6e}, matvecs {} sequential / {} parallel",
        last.outer_index, last.cost, last.matvec_sequential, last.matvec_parallel
    );
    let mut counter = MatvecCounter::new();
    let baseline = problem.optimal_step_gradient(
        &problem.zero_control(),
        StopRule::tolerance(config.gradient_rtol, 20_000),
        &mut counter,
    )?;
    println!(
        "optimal-step gradient: {} iterations, J = {:.6e}, {} matvecs",
        baseline.history.len() - 1,
        baseline.final_cost(),
        counter.count()
    );

    // effort to get within 1% of the converged cost
    let threshold = baseline.final_cost() * 1.01;
    let reached = baseline.history.iter().find(|r| r.cost <= threshold).unwrap();
    let matched = parallel.history.iter().find(|m| m.cost <= threshold).unwrap();
    println!(
        "J <= {threshold:.6e}: baseline after {} iterations / {} matvecs, intermediate targets after {} / {} parallel matvecs",
        reached.iteration, reached.matvecs, matched.outer_index, matched.matvec_parallel
    );
    Ok(())
}
