//! Outer loop of the intermediate-targets method.
//!
//! Each outer iteration
//! 1. sweeps the state and adjoint of the current control and samples the
//!    target trajectory at the breakpoints,
//! 2. improves every window problem concurrently from its warm start,
//! 3. concatenates the window controls,
//! 4. moves towards the concatenation with the exactly minimizing step.
//!
//! Matvecs are tallied twice: `sequential` counts everything, `parallel`
//! charges each step-2 batch only for its most expensive window.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use crate::control_problem::{ControlProblem, StopRule};
use crate::discretization::SpatialField;
use crate::error::{Error, Result};
use crate::intermediate_targets::{
    assemble_subproblems, make_partition, solve_subproblem, SubProblem, TargetTrajectory, TimePartition,
};
use crate::propagators::{ControlField, MatvecCounter, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterConfig {
    /// Number of time windows.
    pub windows: usize,
    /// Stopping rule of the per-window optimal-step gradient method.
    pub inner: StopRule,
    pub max_outer: usize,
    /// Stop once `|grad J(v_k)|_H <= rtol * (1 + |grad J(v_0)|_H)`.
    pub gradient_rtol: f64,
    pub worker_count: usize,
}

impl Default for OuterConfig {
    fn default() -> Self {
        Self {
            windows: 1,
            inner: StopRule::iterations(1),
            max_outer: 1000,
            gradient_rtol: 1e-6,
            worker_count: 1,
        }
    }
}

impl OuterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.windows == 0 {
            return Err(Error::Config("window count must be at least 1".into()));
        }
        if self.worker_count == 0 {
            return Err(Error::Config("worker count must be at least 1".into()));
        }
        if !(self.gradient_rtol > 0.0) {
            return Err(Error::Config(format!("gradient_rtol must be positive, got {}", self.gradient_rtol)));
        }
        if self.inner.max_iterations == 0 {
            return Err(Error::Config("inner iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Cumulative matvec counts under both accounting conventions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MatvecTally {
    pub sequential: u64,
    pub parallel: u64,
}

impl MatvecTally {
    /// Charges single-threaded work to both tallies.
    fn serial(&mut self, matvecs: u64) {
        self.sequential += matvecs;
        self.parallel += matvecs;
    }
}

/// One row of the outer-iteration history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationMetrics {
    pub outer_index: usize,
    pub cost: f64,
    pub misfit: f64,
    pub penalty: f64,
    /// Step taken from this iterate, 0 for the last one.
    pub theta: f64,
    pub gradient_norm: f64,
    pub matvec_sequential: u64,
    pub matvec_parallel: u64,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub control: ControlField,
    pub history: Vec<IterationMetrics>,
    /// `false` when `max_outer` was hit first, or when the line search
    /// found no decrease before the gradient test passed.
    pub converged: bool,
}

/// A control together with its state trajectory.
#[derive(Debug, Clone)]
pub struct Iterate {
    control: ControlField,
    state: Trajectory,
}

impl Iterate {
    pub fn new(problem: &ControlProblem, control: ControlField, tally: &mut MatvecTally) -> Result<Self> {
        let mut counter = MatvecCounter::new();
        let state = problem.state(&control, &mut counter)?;
        tally.serial(counter.count());
        Ok(Self { control, state })
    }

    pub fn control(&self) -> &ControlField {
        &self.control
    }

    pub fn state(&self) -> &Trajectory {
        &self.state
    }

    pub fn into_control(self) -> ControlField {
        self.control
    }
}

/// What the first step of an outer iteration knows about the iterate.
struct Diagnosis {
    targets: TargetTrajectory,
    cost: f64,
    misfit: f64,
    penalty: f64,
    gradient_norm: f64,
}

/// The intermediate-targets solver bound to one problem.
pub struct IntermediateTargets<'a> {
    problem: &'a ControlProblem,
    config: OuterConfig,
    partition: TimePartition,
}

impl<'a> IntermediateTargets<'a> {
    pub fn new(problem: &'a ControlProblem, config: OuterConfig) -> Result<Self> {
        config.validate()?;
        let partition = make_partition(problem.time_spec(), config.windows)?;
        Ok(Self { problem, config, partition })
    }

    pub fn partition(&self) -> &TimePartition {
        &self.partition
    }

    fn diagnose(&self, iterate: &Iterate, tally: &mut MatvecTally) -> Result<Diagnosis> {
        let problem = self.problem;
        let mut counter = MatvecCounter::new();
        let record = problem.record_from_final_state(&iterate.control, iterate.state.last().clone())?;
        let residual = iterate.state.last().sub(problem.y_target())?;
        let adjoint = problem.adjoint(&residual, &mut counter)?;
        tally.serial(counter.count());
        let gradient = problem.gradient_from_adjoint(&iterate.control, &adjoint)?;
        let targets = TargetTrajectory::with_adjoint(problem, &self.partition, &iterate.state, adjoint)?;
        Ok(Diagnosis {
            targets,
            cost: record.cost,
            misfit: record.misfit,
            penalty: record.penalty,
            gradient_norm: gradient.norm_h(problem.grid())?,
        })
    }

    /// Steps 2 to 4 given the targets of the current iterate. Returns theta.
    fn advance(&self, iterate: &mut Iterate, diagnosis: &Diagnosis, tally: &mut MatvecTally) -> Result<f64> {
        let problem = self.problem;
        let subs = assemble_subproblems(problem, &iterate.control, &self.partition, &diagnosis.targets)?;
        let solved = solve_windows(&subs, self.config.inner, self.config.worker_count)?;

        let mut pieces = Vec::with_capacity(solved.len());
        let mut slowest = 0;
        for (control, counter) in solved {
            tally.sequential += counter.count();
            slowest = slowest.max(counter.count());
            pieces.push(control);
        }
        tally.parallel += slowest;

        let concatenated = ControlField::concatenate(*problem.time_spec(), &pieces)?;
        let direction = concatenated.sub(&iterate.control)?;

        let mut counter = MatvecCounter::new();
        let response = problem.homogeneous_state(&direction, &mut counter)?;
        tally.serial(counter.count());

        let residual = iterate.state.last().sub(problem.y_target())?;
        let theta = exact_step(problem, &residual, &iterate.control, &direction, response.last())?;
        if theta == 0.0 {
            return Ok(0.0);
        }

        let mut control = iterate.control.clone();
        control.axpy(theta, &direction)?;
        let mut final_state = iterate.state.last().clone();
        final_state.axpy(theta, response.last())?;
        let candidate = problem.record_from_final_state(&control, final_state)?.cost;
        // rounding can only matter once the direction is negligible
        if candidate > diagnosis.cost {
            return Ok(0.0);
        }
        iterate.control = control;
        iterate.state.axpy(theta, &response)?;
        Ok(theta)
    }

    /// One full outer iteration from `iterate`. Returns theta.
    pub fn outer_iteration(&self, iterate: &mut Iterate, tally: &mut MatvecTally) -> Result<f64> {
        let diagnosis = self.diagnose(iterate, tally)?;
        self.advance(iterate, &diagnosis, tally)
    }

    /// Iterates from the zero control until the gradient test passes or
    /// `max_outer` updates have been made.
    pub fn run(&self) -> Result<RunOutcome> {
        self.run_from(self.problem.zero_control())
    }

    pub fn run_from(&self, v0: ControlField) -> Result<RunOutcome> {
        let start = Instant::now();
        let mut tally = MatvecTally::default();
        let mut iterate = Iterate::new(self.problem, v0, &mut tally)?;
        let mut history = Vec::new();
        let mut initial_gradient_norm = None;

        for outer_index in 0.. {
            let diagnosis = self.diagnose(&iterate, &mut tally)?;
            let g0 = *initial_gradient_norm.get_or_insert(diagnosis.gradient_norm);
            let mut row = IterationMetrics {
                outer_index,
                cost: diagnosis.cost,
                misfit: diagnosis.misfit,
                penalty: diagnosis.penalty,
                theta: 0.0,
                gradient_norm: diagnosis.gradient_norm,
                matvec_sequential: tally.sequential,
                matvec_parallel: tally.parallel,
                wall_time: start.elapsed(),
            };
            let converged = diagnosis.gradient_norm <= self.config.gradient_rtol * (1.0 + g0);
            if converged || outer_index >= self.config.max_outer {
                history.push(row);
                return Ok(RunOutcome { control: iterate.into_control(), history, converged });
            }
            row.theta = self.advance(&mut iterate, &diagnosis, &mut tally)?;
            history.push(row);
            // theta = 0 leaves the iterate as it was, so every further
            // iteration would repeat this one
            if row.theta == 0.0 {
                return Ok(RunOutcome { control: iterate.into_control(), history, converged: false });
            }
        }
        unreachable!()
    }
}

/// `theta` minimizing `J(v + theta d)`, given the residual `y(T; v) - y_target`
/// and the final state `z` of the zero-started dynamics driven by `d`.
fn exact_step(
    problem: &ControlProblem,
    residual: &SpatialField,
    v: &ControlField,
    d: &ControlField,
    z: &SpatialField,
) -> Result<f64> {
    let grid = problem.grid();
    let alpha = problem.alpha();
    let slope = grid.inner_omega(residual, z)? + alpha * v.inner_h(grid, d)?;
    let curvature = grid.inner_omega(z, z)? + alpha * d.inner_h(grid, d)?;
    if !(curvature > 0.0) {
        return Ok(0.0);
    }
    Ok(-slope / curvature)
}

/// Exact minimizer of `theta -> J(v + theta d)`; zero when `d = 0`.
pub fn line_search_theta(
    problem: &ControlProblem,
    v: &ControlField,
    d: &ControlField,
    counter: &mut MatvecCounter,
) -> Result<f64> {
    let state = problem.state(v, counter)?;
    let residual = state.last().sub(problem.y_target())?;
    let z = problem.homogeneous_final_state(d, counter)?;
    exact_step(problem, &residual, v, d, &z)
}

/// Solves every window with a pool of `workers` threads. Results come back
/// in window order whatever the completion order.
fn solve_windows(
    subs: &[SubProblem],
    inner: StopRule,
    workers: usize,
) -> Result<Vec<(ControlField, MatvecCounter)>> {
    let solve = |sub: &SubProblem| {
        let mut counter = MatvecCounter::new();
        solve_subproblem(sub, inner, &mut counter).map(|control| (control, counter))
    };

    let mut slots: Vec<Option<Result<(ControlField, MatvecCounter)>>> = if workers <= 1 || subs.len() <= 1 {
        subs.iter().map(|sub| Some(solve(sub))).collect()
    } else {
        let next = AtomicUsize::new(0);
        let mut slots: Vec<_> = subs.iter().map(|_| None).collect();
        thread::scope(|scope| {
            let handles: Vec<_> = (0..workers.min(subs.len()))
                .map(|_| {
                    scope.spawn(|| {
                        let mut done = Vec::new();
                        loop {
                            let k = next.fetch_add(1, Ordering::Relaxed);
                            let Some(sub) = subs.get(k) else { break };
                            done.push((k, solve(sub)));
                        }
                        done
                    })
                })
                .collect();
            for handle in handles {
                for (k, result) in handle.join().expect("window worker panicked") {
                    slots[k] = Some(result);
                }
            }
        });
        slots
    };

    slots
        .iter_mut()
        .zip(subs)
        .map(|(slot, sub)| {
            slot.take().expect("every window is solved").map_err(|source| {
                let window = sub.problem().time_spec();
                Error::Subproblem {
                    index: sub.index(),
                    t_start: window.t_start(),
                    t_end: window.t_end(),
                    source: Box::new(source),
                }
            })
        })
        .collect()
}

/// One outer iteration from `v_k`, starting with a fresh state sweep.
pub fn outer_iteration(
    problem: &ControlProblem,
    v_k: &ControlField,
    config: OuterConfig,
    tally: &mut MatvecTally,
) -> Result<(ControlField, f64)> {
    let solver = IntermediateTargets::new(problem, config)?;
    let mut iterate = Iterate::new(problem, v_k.clone(), tally)?;
    let theta = solver.outer_iteration(&mut iterate, tally)?;
    Ok((iterate.into_control(), theta))
}

pub fn run(problem: &ControlProblem, config: OuterConfig) -> Result<RunOutcome> {
    IntermediateTargets::new(problem, config)?.run()
}
