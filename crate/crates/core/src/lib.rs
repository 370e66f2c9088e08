//! Time-parallel optimal control of the heat equation.
//!
//! The global problem, minimizing `1/2 |y(T) - y_target|^2 + alpha/2 |v|^2`
//! over controls `v` acting on a patch of the domain, is split into
//! independent problems on time windows. Each window starts from the current
//! state and tracks the target trajectory `y - p` at its right end. An outer
//! loop with an exact line search glues the window solutions together.
//!
//! Modules, bottom up:
//! - [`discretization`]: grids, Laplacian, control injection and restriction.
//! - [`propagators`]: implicit Euler state and adjoint sweeps, counted CG.
//! - [`control_problem`]: cost, gradient, optimal-step gradient baseline.
//! - [`oracle`]: dense normal-equations solution for small instances.
//! - [`intermediate_targets`]: partitions, target trajectory, window problems.
//! - [`parallel_driver`]: the outer loop and its matvec accounting.
//! - [`bench`]: run configuration files and CSV traces.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod control_problem;
pub mod discretization;
pub mod error;
pub mod intermediate_targets;
pub mod oracle;
pub mod parallel_driver;
pub mod propagators;

pub use control_problem::{ControlProblem, DescentOutcome, DescentRecord, EvaluationRecord, StopRule, WarmStart};
pub use discretization::{build_grid, ControlSlice, Grid, Interval, SpatialField};
pub use error::{Error, Result};
pub use intermediate_targets::{
    assemble_subproblems, make_partition, solve_subproblem, target_trajectory, SubProblem, TargetTrajectory,
    TimePartition,
};
pub use oracle::{oracle_kkt_solve, OracleSolution};
pub use parallel_driver::{
    line_search_theta, outer_iteration, run, IntermediateTargets, IterationMetrics, MatvecTally, OuterConfig,
    RunOutcome,
};
pub use propagators::{cg_solve, solve_adjoint, solve_state, ControlField, MatvecCounter, SolverOptions, TimeGridSpec, Trajectory};
