//! Splitting the control problem into independent time windows.
//!
//! For a control `v` with state `y` and adjoint `p`, the target trajectory is
//! `chi = y - p`. On window `[t_n, t_{n+1}]` the local problem starts from
//! `y(t_n)` and tracks `chi(t_{n+1})`. At the global optimum the restriction
//! of the optimal control solves every local problem, so the windows can be
//! optimized concurrently and glued back together.

use crate::control_problem::{ControlProblem, StopRule, WarmStart};
use crate::discretization::SpatialField;
use crate::error::{Error, Result};
use crate::propagators::{ControlField, MatvecCounter, TimeGridSpec, Trajectory};

/// Breakpoints `t_0 = 0 < t_1 < ... < t_N = T` on time-grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct TimePartition {
    time: TimeGridSpec,
    offsets: Vec<usize>,
}

impl TimePartition {
    pub fn window_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn time_spec(&self) -> &TimeGridSpec {
        &self.time
    }

    /// Global step index of every breakpoint, `N + 1` entries.
    pub fn step_offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        self.offsets.iter().map(|&o| self.time.time(o)).collect()
    }

    pub fn step_counts(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn window(&self, n: usize) -> Result<TimeGridSpec> {
        self.time.sub_range(self.offsets[n], self.offsets[n + 1] - self.offsets[n])
    }
}

/// Splits `time` into `n` windows; leftover steps go one each to the
/// leading windows.
pub fn make_partition(time: &TimeGridSpec, n: usize) -> Result<TimePartition> {
    let steps = time.step_count();
    if n == 0 || n > steps {
        return Err(Error::InvalidPartition(format!("cannot split {steps} steps into {n} windows")));
    }
    let base = steps / n;
    let extra = steps % n;
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    for k in 0..n {
        offsets.push(offsets[k] + base + usize::from(k < extra));
    }
    Ok(TimePartition { time: *time, offsets })
}

/// `chi = y - p` sampled at the breakpoints, with the states there.
#[derive(Debug, Clone)]
pub struct TargetTrajectory {
    /// Global adjoint, kept when the caller hands it over.
    adjoint: Option<Trajectory>,
    /// `chi(t_1), ..., chi(t_N)`; the last one is `y_target` itself.
    boundary_targets: Vec<SpatialField>,
    /// `y(t_0), ..., y(t_N)`
    boundary_states: Vec<SpatialField>,
}

impl TargetTrajectory {
    /// Samples already computed state and adjoint trajectories.
    pub fn from_trajectories(
        problem: &ControlProblem,
        partition: &TimePartition,
        state: &Trajectory,
        adjoint: &Trajectory,
    ) -> Result<Self> {
        let steps = problem.time_spec().step_count();
        if partition.time_spec().step_count() != steps
            || state.time_spec().step_count() != steps
            || adjoint.time_spec().step_count() != steps
        {
            return Err(Error::InvalidPartition("partition and trajectories cover different time grids".into()));
        }
        let offsets = partition.step_offsets();
        let boundary_states = offsets.iter().map(|&o| state.at(o).clone()).collect();
        let mut boundary_targets = Vec::with_capacity(partition.window_count());
        for &o in &offsets[1..offsets.len() - 1] {
            boundary_targets.push(state.at(o).sub(adjoint.at(o))?);
        }
        // chi(T) = y(T) - (y(T) - y_target)
        boundary_targets.push(problem.y_target().clone());
        Ok(Self { adjoint: None, boundary_targets, boundary_states })
    }

    /// As [`Self::from_trajectories`], keeping the adjoint so that window
    /// problems can start from its restriction instead of re-solving it.
    pub fn with_adjoint(
        problem: &ControlProblem,
        partition: &TimePartition,
        state: &Trajectory,
        adjoint: Trajectory,
    ) -> Result<Self> {
        let mut targets = Self::from_trajectories(problem, partition, state, &adjoint)?;
        targets.adjoint = Some(adjoint);
        Ok(targets)
    }

    /// `chi(t_{n+1})` for window `n`.
    pub fn boundary_targets(&self) -> &[SpatialField] {
        &self.boundary_targets
    }

    /// `y(t_n)` for `n = 0..=N`.
    pub fn boundary_states(&self) -> &[SpatialField] {
        &self.boundary_states
    }
}

/// One forward and one backward sweep, then `chi` at the breakpoints.
pub fn target_trajectory(
    problem: &ControlProblem,
    v: &ControlField,
    partition: &TimePartition,
    counter: &mut MatvecCounter,
) -> Result<TargetTrajectory> {
    let y = problem.state(v, counter)?;
    let p = problem.adjoint(&y.last().sub(problem.y_target())?, counter)?;
    TargetTrajectory::with_adjoint(problem, partition, &y, p)
}

/// A window problem together with its warm start.
#[derive(Debug, Clone)]
pub struct SubProblem {
    index: usize,
    problem: ControlProblem,
    warm_start: ControlField,
    warm: WarmStart,
}

impl SubProblem {
    pub fn index(&self) -> usize {
        self.index
    }

    /// The window problem: same dynamics, starts at `y(t_n)`, tracks `chi(t_{n+1})`.
    pub fn problem(&self) -> &ControlProblem {
        &self.problem
    }

    pub fn initial_state(&self) -> &SpatialField {
        self.problem.y0()
    }

    pub fn local_target(&self) -> &SpatialField {
        self.problem.y_target()
    }

    /// Restriction of the global control to this window.
    pub fn warm_start(&self) -> &ControlField {
        &self.warm_start
    }
}

pub fn assemble_subproblems(
    problem: &ControlProblem,
    v: &ControlField,
    partition: &TimePartition,
    targets: &TargetTrajectory,
) -> Result<Vec<SubProblem>> {
    let n = partition.window_count();
    if targets.boundary_targets.len() != n || targets.boundary_states.len() != n + 1 {
        return Err(Error::InvalidPartition(format!(
            "targets hold {} windows, partition has {n}",
            targets.boundary_targets.len()
        )));
    }
    if v.time_spec().step_count() != partition.time_spec().step_count() {
        return Err(Error::InvalidPartition("control and partition cover different time grids".into()));
    }
    let offsets = partition.step_offsets();
    (0..n)
        .map(|k| {
            let window = partition.window(k)?;
            let local = problem.restricted(
                window,
                targets.boundary_states[k].clone(),
                targets.boundary_targets[k].clone(),
            )?;
            let count = offsets[k + 1] - offsets[k];
            // On its window the warm start reproduces the global state, and
            // the local residual y(t_{n+1}) - chi(t_{n+1}) is p(t_{n+1}), so
            // the local adjoint is the global one restricted.
            let adjoint = match &targets.adjoint {
                Some(p) => Some(p.window(offsets[k], count)?),
                None => None,
            };
            Ok(SubProblem {
                index: k,
                problem: local,
                warm_start: v.restrict_steps(offsets[k], count)?,
                warm: WarmStart { final_state: targets.boundary_states[k + 1].clone(), adjoint },
            })
        })
        .collect()
}

/// Runs the optimal-step gradient method on one window from its warm start.
pub fn solve_subproblem(sub: &SubProblem, inner: StopRule, counter: &mut MatvecCounter) -> Result<ControlField> {
    let outcome = sub.problem.optimal_step_gradient_from(&sub.warm_start, Some(sub.warm.clone()), inner, counter)?;
    Ok(outcome.control)
}
