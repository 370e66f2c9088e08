//! Terminal-tracking optimal control of the heat equation: cost, adjoint
//! gradient, and the optimal-step gradient method.

use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::discretization::{Grid, SpatialField};
use crate::error::{Error, Result};
use crate::propagators::{
    solve_adjoint, solve_state, ControlField, MatvecCounter, SolverOptions, TimeGridSpec, Trajectory,
};

/// `J(v) = 1/2 |y(T) - y_target|^2 + alpha/2 |v|_H^2` subject to the
/// implicit Euler heat dynamics started at `y0`.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    grid: Arc<Grid>,
    time: TimeGridSpec,
    y0: SpatialField,
    y_target: SpatialField,
    alpha: f64,
    nu: f64,
    solver: SolverOptions,
}

impl ControlProblem {
    pub fn new(
        grid: Arc<Grid>,
        time: TimeGridSpec,
        y0: SpatialField,
        y_target: SpatialField,
        alpha: f64,
        nu: f64,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidProblem(format!("alpha must be positive, got {alpha}")));
        }
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::InvalidProblem(format!("nu must be positive, got {nu}")));
        }
        grid.check(y0.grid_id())?;
        grid.check(y_target.grid_id())?;
        Ok(Self { grid, time, y0, y_target, alpha, nu, solver: SolverOptions::default() })
    }

    pub fn with_solver(mut self, solver: SolverOptions) -> Self {
        self.solver = solver;
        self
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn time_spec(&self) -> &TimeGridSpec {
        &self.time
    }

    pub fn y0(&self) -> &SpatialField {
        &self.y0
    }

    pub fn y_target(&self) -> &SpatialField {
        &self.y_target
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn solver(&self) -> &SolverOptions {
        &self.solver
    }

    /// Same dynamics and weights on another time window with another
    /// initial state and target.
    pub fn restricted(&self, time: TimeGridSpec, y0: SpatialField, y_target: SpatialField) -> Result<Self> {
        Ok(Self::new(self.grid.clone(), time, y0, y_target, self.alpha, self.nu)?.with_solver(self.solver))
    }

    pub fn zero_control(&self) -> ControlField {
        ControlField::zeros(&self.grid, self.time)
    }

    fn check_control(&self, v: &ControlField) -> Result<()> {
        self.grid.check(v.grid_id())?;
        if v.time_spec().step_count() != self.time.step_count() {
            return Err(Error::LengthMismatch {
                expected: self.time.step_count(),
                found: v.time_spec().step_count(),
            });
        }
        Ok(())
    }

    pub fn state(&self, v: &ControlField, counter: &mut MatvecCounter) -> Result<Trajectory> {
        self.check_control(v)?;
        solve_state(&self.grid, &self.time, &self.y0, v, self.nu, &self.solver, counter)
    }

    /// Final state of the dynamics started from zero and driven by `d`.
    pub fn homogeneous_final_state(&self, d: &ControlField, counter: &mut MatvecCounter) -> Result<SpatialField> {
        Ok(self.homogeneous_state(d, counter)?.last().clone())
    }

    pub(crate) fn homogeneous_state(&self, d: &ControlField, counter: &mut MatvecCounter) -> Result<Trajectory> {
        self.check_control(d)?;
        solve_state(&self.grid, &self.time, &self.grid.zeros(), d, self.nu, &self.solver, counter)
    }

    pub fn adjoint(&self, terminal: &SpatialField, counter: &mut MatvecCounter) -> Result<Trajectory> {
        solve_adjoint(&self.grid, &self.time, terminal, self.nu, &self.solver, counter)
    }

    /// Cost split from an already computed final state.
    pub fn record_from_final_state(&self, v: &ControlField, final_state: SpatialField) -> Result<EvaluationRecord> {
        let residual = final_state.sub(&self.y_target)?;
        let misfit = 0.5 * self.grid.inner_omega(&residual, &residual)?;
        let penalty = 0.5 * self.alpha * v.inner_h(&self.grid, v)?;
        Ok(EvaluationRecord { cost: misfit + penalty, misfit, penalty, final_state })
    }

    pub fn evaluate(&self, v: &ControlField, counter: &mut MatvecCounter) -> Result<EvaluationRecord> {
        let y = self.state(v, counter)?;
        self.record_from_final_state(v, y.last().clone())
    }

    /// `g_j = alpha * v_j + B* p_{j-1}` for the adjoint started at `residual`.
    pub fn gradient_from_adjoint(&self, v: &ControlField, p: &Trajectory) -> Result<ControlField> {
        self.check_control(v)?;
        let mut g = v.clone();
        g.scale(self.alpha);
        let m = g.slice_len();
        let mask = self.grid.control_mask();
        for j in 1..=self.time.step_count() {
            let p_prev = p.at(j - 1).values();
            let slice = &mut g.values_mut()[(j - 1) * m..j * m];
            for (gi, &node) in slice.iter_mut().zip(mask) {
                *gi += p_prev[node];
            }
        }
        Ok(g)
    }

    /// Gradient given the terminal residual `y(T) - y_target`.
    pub fn gradient_from_residual(
        &self,
        v: &ControlField,
        residual: &SpatialField,
        counter: &mut MatvecCounter,
    ) -> Result<ControlField> {
        let p = self.adjoint(residual, counter)?;
        self.gradient_from_adjoint(v, &p)
    }

    pub fn gradient(&self, v: &ControlField, counter: &mut MatvecCounter) -> Result<ControlField> {
        let y = self.state(v, counter)?;
        let residual = y.last().sub(&self.y_target)?;
        self.gradient_from_residual(v, &residual, counter)
    }

    /// Optimal-step gradient method from `v_init`.
    pub fn optimal_step_gradient(
        &self,
        v_init: &ControlField,
        stop: StopRule,
        counter: &mut MatvecCounter,
    ) -> Result<DescentOutcome> {
        self.optimal_step_gradient_from(v_init, None, stop, counter)
    }

    /// As [`Self::optimal_step_gradient`], reusing whatever the caller
    /// already knows about `v_init`.
    pub fn optimal_step_gradient_from(
        &self,
        v_init: &ControlField,
        warm: Option<WarmStart>,
        stop: StopRule,
        counter: &mut MatvecCounter,
    ) -> Result<DescentOutcome> {
        self.check_control(v_init)?;
        let start = Instant::now();
        let mut v = v_init.clone();
        let (mut final_state, mut known_adjoint) = match warm {
            Some(WarmStart { final_state, adjoint }) => {
                self.grid.check(final_state.grid_id())?;
                if let Some(p) = &adjoint {
                    if p.time_spec().step_count() != self.time.step_count() {
                        return Err(Error::LengthMismatch {
                            expected: self.time.step_count(),
                            found: p.time_spec().step_count(),
                        });
                    }
                }
                (final_state, adjoint)
            }
            None => (self.state(&v, counter)?.last().clone(), None),
        };
        let mut history = Vec::new();
        let mut initial_gradient_norm = None;

        for iteration in 0.. {
            let record = self.record_from_final_state(&v, final_state.clone())?;
            let mut entry = DescentRecord {
                iteration,
                cost: record.cost,
                misfit: record.misfit,
                penalty: record.penalty,
                gradient_norm: None,
                step: 0.0,
                matvecs: counter.count(),
                wall_time: start.elapsed(),
            };
            let at_cap = iteration >= stop.max_iterations;
            // without a tolerance the last gradient would only be logged
            if at_cap && stop.gradient_rtol.is_none() {
                history.push(entry);
                return Ok(DescentOutcome { control: v, history, converged: false });
            }

            let p = match known_adjoint.take() {
                Some(p) => p,
                None => self.adjoint(&final_state.sub(&self.y_target)?, counter)?,
            };
            let g = self.gradient_from_adjoint(&v, &p)?;
            let gradient_norm = g.norm_h(&self.grid)?;
            let g0 = *initial_gradient_norm.get_or_insert(gradient_norm);
            entry.gradient_norm = Some(gradient_norm);
            entry.matvecs = counter.count();
            entry.wall_time = start.elapsed();

            let converged = gradient_norm == 0.0
                || stop.gradient_rtol.is_some_and(|rtol| gradient_norm <= rtol * (1.0 + g0));
            if converged || at_cap {
                history.push(entry);
                return Ok(DescentOutcome { control: v, history, converged });
            }

            let z = self.homogeneous_final_state(&g, counter)?;
            let g_sq = gradient_norm * gradient_norm;
            let curvature = self.grid.inner_omega(&z, &z)? + self.alpha * g_sq;
            if !(curvature > 0.0) {
                history.push(entry);
                return Ok(DescentOutcome { control: v, history, converged: true });
            }
            let step = g_sq / curvature;
            v.axpy(-step, &g)?;
            final_state.axpy(-step, &z)?;
            entry.step = step;
            history.push(entry);
        }
        unreachable!()
    }
}

/// What a caller already knows about the starting control of a descent.
#[derive(Debug, Clone)]
pub struct WarmStart {
    /// Final state driven by the starting control.
    pub final_state: SpatialField,
    /// Adjoint started from the starting control's terminal residual.
    pub adjoint: Option<Trajectory>,
}

/// Cost of one control, split into its two terms.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRecord {
    pub cost: f64,
    /// `1/2 |y(T) - y_target|^2`
    pub misfit: f64,
    /// `alpha/2 |v|_H^2`
    pub penalty: f64,
    pub final_state: SpatialField,
}

/// When to stop the optimal-step gradient method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    /// Maximum number of control updates.
    pub max_iterations: usize,
    /// Stop once `|g|_H <= rtol * (1 + |g_0|_H)`.
    pub gradient_rtol: Option<f64>,
}

impl StopRule {
    pub fn iterations(max_iterations: usize) -> Self {
        Self { max_iterations, gradient_rtol: None }
    }

    pub fn tolerance(gradient_rtol: f64, max_iterations: usize) -> Self {
        Self { max_iterations, gradient_rtol: Some(gradient_rtol) }
    }
}

/// One iterate of the optimal-step gradient method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentRecord {
    pub iteration: usize,
    pub cost: f64,
    pub misfit: f64,
    pub penalty: f64,
    /// `None` when the run stopped at its iteration cap without a
    /// tolerance, so the last gradient was never formed.
    pub gradient_norm: Option<f64>,
    /// Step taken from this iterate, 0 for the last one.
    pub step: f64,
    /// Counter value once this iterate's cost and gradient were known.
    pub matvecs: u64,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct DescentOutcome {
    pub control: ControlField,
    /// Initial iterate first, one entry per update after it.
    pub history: Vec<DescentRecord>,
    pub converged: bool,
}

impl DescentOutcome {
    pub fn final_cost(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.cost)
    }
}
