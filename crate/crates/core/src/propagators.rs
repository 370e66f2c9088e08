//! Implicit Euler propagators for the controlled heat equation and its
//! discrete adjoint.
//!
//! One forward step solves `(I - dt*nu*Lap) y_j = y_{j-1} + dt * B v_j`, where
//! the control slice `v_j` is attached to the end of step `j`. The backward
//! recursion `(I - dt*nu*Lap) p_{j-1} = p_j` is the exact transpose of the
//! forward step map, so gradients built from it are exact for the discrete
//! cost up to the linear-solver tolerance.

use crate::discretization::{axpy, dot, ControlSlice, Grid, SpatialField};
use crate::error::{Error, Result};

/// Uniform time grid `t_start + j * dt`, `j = 0..=step_count`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGridSpec {
    t_start: f64,
    t_end: f64,
    step_count: usize,
    dt: f64,
}

impl TimeGridSpec {
    pub fn new(t_start: f64, t_end: f64, step_count: usize) -> Result<Self> {
        if step_count == 0 {
            return Err(Error::InvalidTimeGrid("step count must be at least 1".into()));
        }
        if !(t_end > t_start) || !t_start.is_finite() || !t_end.is_finite() {
            return Err(Error::InvalidTimeGrid(format!("empty time interval [{t_start}, {t_end}]")));
        }
        Ok(Self { t_start, t_end, step_count, dt: (t_end - t_start) / step_count as f64 })
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self, index: usize) -> f64 {
        if index == self.step_count {
            self.t_end
        } else {
            self.t_start + index as f64 * self.dt
        }
    }

    /// The `count` steps starting after step `offset`, sharing this grid's `dt`.
    pub fn sub_range(&self, offset: usize, count: usize) -> Result<Self> {
        if count == 0 || offset + count > self.step_count {
            return Err(Error::InvalidTimeGrid(format!(
                "steps {offset}..{} out of range 0..{}",
                offset + count,
                self.step_count
            )));
        }
        Ok(Self {
            t_start: self.time(offset),
            t_end: self.time(offset + count),
            step_count: count,
            dt: self.dt,
        })
    }
}

/// A time-indexed control: one slice on the control patch per step.
/// Slice `j` (1-based) acts on the step ending at `t_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlField {
    time: TimeGridSpec,
    grid_id: u64,
    slice_len: usize,
    values: Vec<f64>,
}

impl ControlField {
    pub fn zeros(grid: &Grid, time: TimeGridSpec) -> Self {
        Self {
            time,
            grid_id: grid.id(),
            slice_len: grid.control_len(),
            values: vec![0.0; grid.control_len() * time.step_count()],
        }
    }

    /// Builds a control from raw values laid out slice after slice.
    pub fn from_values(grid: &Grid, time: TimeGridSpec, values: Vec<f64>) -> Result<Self> {
        let expected = grid.control_len() * time.step_count();
        if values.len() != expected {
            return Err(Error::LengthMismatch { expected, found: values.len() });
        }
        Ok(Self { time, grid_id: grid.id(), slice_len: grid.control_len(), values })
    }

    /// Samples `f(t_j, x)` at every step end and control node.
    pub fn from_fn(grid: &Grid, time: TimeGridSpec, f: impl Fn(f64, &[f64]) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.control_len() * time.step_count());
        for j in 1..=time.step_count() {
            let t = time.time(j);
            values.extend(grid.control_mask().iter().map(|&node| f(t, &grid.coordinates(node))));
        }
        Self { time, grid_id: grid.id(), slice_len: grid.control_len(), values }
    }

    pub fn time_spec(&self) -> &TimeGridSpec {
        &self.time
    }

    pub fn grid_id(&self) -> u64 {
        self.grid_id
    }

    pub fn slice_len(&self) -> usize {
        self.slice_len
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Raw values of slice `j`, `1 <= j <= step_count`.
    pub fn slice_values(&self, j: usize) -> &[f64] {
        &self.values[(j - 1) * self.slice_len..j * self.slice_len]
    }

    pub fn slice(&self, grid: &Grid, j: usize) -> Result<ControlSlice> {
        grid.check(self.grid_id)?;
        grid.control_slice(self.slice_values(j).to_vec())
    }

    pub fn slices(&self, grid: &Grid) -> Result<Vec<ControlSlice>> {
        (1..=self.time.step_count()).map(|j| self.slice(grid, j)).collect()
    }

    /// `<self, other>_H = dt * sum_j <self_j, other_j>_c`
    pub fn inner_h(&self, grid: &Grid, other: &ControlField) -> Result<f64> {
        self.check_compatible(other)?;
        grid.check(self.grid_id)?;
        Ok(self.time.dt() * grid.node_weight() * dot(&self.values, &other.values))
    }

    pub fn norm_h(&self, grid: &Grid) -> Result<f64> {
        Ok(self.inner_h(grid, self)?.sqrt())
    }

    /// `self += scale * other`
    pub fn axpy(&mut self, scale: f64, other: &ControlField) -> Result<()> {
        self.check_compatible(other)?;
        axpy(scale, &other.values, &mut self.values);
        Ok(())
    }

    pub fn sub(&self, other: &ControlField) -> Result<ControlField> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    /// Steps `offset + 1 ..= offset + count` as a control on `sub_time`.
    pub fn restrict_steps(&self, offset: usize, count: usize) -> Result<ControlField> {
        let time = self.time.sub_range(offset, count)?;
        let values = self.values[offset * self.slice_len..(offset + count) * self.slice_len].to_vec();
        Ok(ControlField { time, grid_id: self.grid_id, slice_len: self.slice_len, values })
    }

    /// Concatenates consecutive pieces into a control on `time`.
    pub fn concatenate(time: TimeGridSpec, pieces: &[ControlField]) -> Result<ControlField> {
        let first = pieces
            .first()
            .ok_or_else(|| Error::InvalidTimeGrid("nothing to concatenate".into()))?;
        let steps: usize = pieces.iter().map(|p| p.time.step_count()).sum();
        if steps != time.step_count() {
            return Err(Error::LengthMismatch { expected: time.step_count(), found: steps });
        }
        let mut values = Vec::with_capacity(first.slice_len * steps);
        for piece in pieces {
            if piece.grid_id != first.grid_id {
                return Err(Error::GridMismatch { expected: first.grid_id, found: piece.grid_id });
            }
            values.extend_from_slice(&piece.values);
        }
        Ok(ControlField { time, grid_id: first.grid_id, slice_len: first.slice_len, values })
    }

    fn check_compatible(&self, other: &ControlField) -> Result<()> {
        if self.grid_id != other.grid_id {
            return Err(Error::GridMismatch { expected: self.grid_id, found: other.grid_id });
        }
        if self.values.len() != other.values.len() {
            return Err(Error::LengthMismatch { expected: self.values.len(), found: other.values.len() });
        }
        Ok(())
    }
}

/// Snapshots at every time-grid point, `snapshots[j]` at `t_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    time: TimeGridSpec,
    snapshots: Vec<SpatialField>,
}

impl Trajectory {
    pub fn time_spec(&self) -> &TimeGridSpec {
        &self.time
    }

    pub fn snapshots(&self) -> &[SpatialField] {
        &self.snapshots
    }

    pub fn at(&self, j: usize) -> &SpatialField {
        &self.snapshots[j]
    }

    pub fn first(&self) -> &SpatialField {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &SpatialField {
        &self.snapshots[self.time.step_count()]
    }

    /// Snapshots `offset ..= offset + count` as a trajectory on `sub_time`.
    pub fn window(&self, offset: usize, count: usize) -> Result<Trajectory> {
        let time = self.time.sub_range(offset, count)?;
        Ok(Trajectory { time, snapshots: self.snapshots[offset..=offset + count].to_vec() })
    }

    /// `self += scale * other`, snapshot by snapshot.
    pub fn axpy(&mut self, scale: f64, other: &Trajectory) -> Result<()> {
        if self.snapshots.len() != other.snapshots.len() {
            return Err(Error::LengthMismatch { expected: self.snapshots.len(), found: other.snapshots.len() });
        }
        for (a, b) in self.snapshots.iter_mut().zip(&other.snapshots) {
            a.axpy(scale, b)?;
        }
        Ok(())
    }
}

/// Counts applications of the discrete Laplacian inside linear solves.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatvecCounter {
    count: u64,
    log: Option<Vec<usize>>,
}

impl MatvecCounter {
    pub fn new() -> Self {
        Self::default()
    }

    /// A counter that also records the iteration count of every solve.
    pub fn with_log() -> Self {
        Self { count: 0, log: Some(Vec::new()) }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn log(&self) -> Option<&[usize]> {
        self.log.as_deref()
    }

    fn record_solve(&mut self, iterations: usize) {
        self.count += iterations as u64;
        if let Some(log) = &mut self.log {
            log.push(iterations);
        }
    }

    /// Folds another (per-worker) counter into this one.
    pub fn absorb(&mut self, other: &MatvecCounter) {
        self.count += other.count;
        if let (Some(log), Some(other_log)) = (&mut self.log, &other.log) {
            log.extend_from_slice(other_log);
        }
    }
}

/// Linear-solver settings shared by all propagator calls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual target.
    pub tol: f64,
    /// Iteration cap; `None` uses the interior node count.
    pub max_iterations: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iterations: None }
    }
}

/// Conjugate gradient for a symmetric positive definite operator, started
/// from zero. Every call of `apply_a` counts as one matvec.
pub fn cg_solve<F>(
    mut apply_a: F,
    b: &[f64],
    tol: f64,
    max_iterations: usize,
    counter: &mut MatvecCounter,
) -> Result<Vec<f64>>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    let mut x = vec![0.0; n];
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        counter.record_solve(0);
        return Ok(x);
    }
    let target = tol * b_norm;
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);

    for iteration in 1..=max_iterations {
        apply_a(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            counter.record_solve(iteration);
            return Err(Error::CgNotConverged { iterations: iteration, residual: rr.sqrt() / b_norm });
        }
        let step = rr / curvature;
        axpy(step, &p, &mut x);
        axpy(-step, &ap, &mut r);
        let rr_next = dot(&r, &r);
        if rr_next.sqrt() <= target {
            counter.record_solve(iteration);
            return Ok(x);
        }
        let beta = rr_next / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_next;
    }
    counter.record_solve(max_iterations);
    Err(Error::CgNotConverged { iterations: max_iterations, residual: rr.sqrt() / b_norm })
}

/// Solves `(I - dt*nu*Lap) x = rhs` on `grid`.
fn implicit_step(
    grid: &Grid,
    rhs: &[f64],
    dt_nu: f64,
    options: &SolverOptions,
    counter: &mut MatvecCounter,
) -> Result<Vec<f64>> {
    let cap = options.max_iterations.unwrap_or_else(|| grid.interior_node_count().max(1));
    cg_solve(
        |u, out| {
            grid.laplacian_into(u, out);
            for (o, ui) in out.iter_mut().zip(u) {
                *o = ui - dt_nu * *o;
            }
        },
        rhs,
        options.tol,
        cap,
        counter,
    )
}

fn check_nu(nu: f64) -> Result<()> {
    if nu >= 0.0 && nu.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidProblem(format!("diffusion coefficient must be non-negative, got {nu}")))
    }
}

/// Forward implicit Euler sweep from `y0` driven by `v`.
pub fn solve_state(
    grid: &Grid,
    time: &TimeGridSpec,
    y0: &SpatialField,
    v: &ControlField,
    nu: f64,
    options: &SolverOptions,
    counter: &mut MatvecCounter,
) -> Result<Trajectory> {
    check_nu(nu)?;
    grid.check(y0.grid_id())?;
    grid.check(v.grid_id())?;
    if v.time_spec().step_count() != time.step_count() {
        return Err(Error::LengthMismatch { expected: time.step_count(), found: v.time_spec().step_count() });
    }
    let dt = time.dt();
    let mut snapshots = Vec::with_capacity(time.step_count() + 1);
    snapshots.push(y0.clone());
    for j in 1..=time.step_count() {
        let mut rhs = snapshots[j - 1].values().to_vec();
        grid.inject_add(v.slice_values(j), dt, &mut rhs);
        let next = implicit_step(grid, &rhs, dt * nu, options, counter)?;
        snapshots.push(grid.field(next)?);
    }
    Ok(Trajectory { time: *time, snapshots })
}

/// Backward sweep from `p(t_end) = terminal`, transpose of [`solve_state`].
pub fn solve_adjoint(
    grid: &Grid,
    time: &TimeGridSpec,
    terminal: &SpatialField,
    nu: f64,
    options: &SolverOptions,
    counter: &mut MatvecCounter,
) -> Result<Trajectory> {
    check_nu(nu)?;
    grid.check(terminal.grid_id())?;
    let steps = time.step_count();
    let mut reversed = Vec::with_capacity(steps + 1);
    reversed.push(terminal.clone());
    for _ in 0..steps {
        let previous = implicit_step(grid, reversed.last().unwrap().values(), time.dt() * nu, options, counter)?;
        reversed.push(grid.field(previous)?);
    }
    reversed.reverse();
    Ok(Trajectory { time: *time, snapshots: reversed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::Interval;
    use nalgebra::{DMatrix, DVector};

    fn line(nodes: usize) -> Grid {
        Grid::build(1, &[nodes], &[Interval::UNIT], &[Interval::UNIT]).unwrap()
    }

    /// Dense `I - dt*nu*Lap` for a 1D grid, assembled from the stencil.
    fn dense_step_matrix(n: usize, h: f64, dt_nu: f64) -> DMatrix<f64> {
        let s = dt_nu / (h * h);
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0 + 2.0 * s
            } else if i.abs_diff(j) == 1 {
                -s
            } else {
                0.0
            }
        })
    }

    #[test]
    fn zero_rhs_costs_nothing() {
        let mut counter = MatvecCounter::new();
        let x = cg_solve(|u, out| out.copy_from_slice(u), &[0.0; 4], 1e-10, 4, &mut counter).unwrap();
        assert_eq!(x, vec![0.0; 4]);
        assert_eq!(counter.count(), 0);
    }

    #[test]
    fn identity_converges_in_one_iteration() {
        let mut counter = MatvecCounter::new();
        let b = [1.0, -2.0, 3.5];
        let x = cg_solve(|u, out| out.copy_from_slice(u), &b, 1e-12, 3, &mut counter).unwrap();
        assert_eq!(counter.count(), 1);
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-15);
        }
    }

    #[test]
    fn cg_matches_dense_solve() {
        let grid = line(5);
        let b = [0.3, -1.2, 2.0];
        let mut counter = MatvecCounter::new();
        let x = implicit_step(&grid, &b, 0.1, &SolverOptions::default(), &mut counter).unwrap();
        let k = dense_step_matrix(3, 0.25, 0.1);
        let exact = k.lu().solve(&DVector::from_row_slice(&b)).unwrap();
        for i in 0..3 {
            assert!((x[i] - exact[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn cg_reports_non_convergence() {
        let mut counter = MatvecCounter::new();
        let b = [1.0, 1.0, 1.0];
        // indefinite operator
        let err = cg_solve(|u, out| out.iter_mut().zip(u).for_each(|(o, x)| *o = -x), &b, 1e-10, 3, &mut counter);
        assert!(matches!(err, Err(Error::CgNotConverged { .. })));
    }

    #[test]
    fn no_source_no_state() {
        let grid = line(6);
        let time = TimeGridSpec::new(0.0, 1.0, 4).unwrap();
        let mut counter = MatvecCounter::new();
        let y = solve_state(&grid, &time, &grid.zeros(), &ControlField::zeros(&grid, time), 1.0, &SolverOptions::default(), &mut counter).unwrap();
        assert!(y.snapshots().iter().all(|s| s.values().iter().all(|&v| v == 0.0)));
        assert_eq!(counter.count(), 0);
        let p = solve_adjoint(&grid, &time, &grid.zeros(), 1.0, &SolverOptions::default(), &mut counter).unwrap();
        assert!(p.snapshots().iter().all(|s| s.values().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn constant_source_without_diffusion() {
        let grid = line(6);
        let time = TimeGridSpec::new(0.0, 1.0, 8).unwrap();
        let y0 = grid.field(vec![0.5; 4]).unwrap();
        let v = ControlField::from_fn(&grid, time, |_, _| 1.0);
        let mut counter = MatvecCounter::new();
        let y = solve_state(&grid, &time, &y0, &v, 0.0, &SolverOptions::default(), &mut counter).unwrap();
        for j in 0..=8 {
            for &value in y.at(j).values() {
                assert!((value - (0.5 + j as f64 * 0.125)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn state_matches_dense_recursion() {
        let grid = line(5);
        let time = TimeGridSpec::new(0.0, 0.2, 2).unwrap();
        let y0 = grid.field(vec![0.7, -0.1, 0.4]).unwrap();
        let v = ControlField::from_values(&grid, time, vec![1.0, 0.5, -0.3, -0.8, 0.2, 0.9]).unwrap();
        let mut counter = MatvecCounter::new();
        let y = solve_state(&grid, &time, &y0, &v, 1.0, &SolverOptions::default(), &mut counter).unwrap();

        let k = dense_step_matrix(3, 0.25, 0.1);
        let mut dense = DVector::from_row_slice(y0.values());
        for j in 1..=2 {
            let source = DVector::from_row_slice(v.slice_values(j));
            dense = k.clone().lu().solve(&(dense + 0.1 * source)).unwrap();
            for i in 0..3 {
                assert!((y.at(j).values()[i] - dense[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn single_adjoint_step_matches_dense_solve() {
        let grid = line(5);
        let time = TimeGridSpec::new(0.0, 0.1, 1).unwrap();
        let terminal = grid.field(vec![0.2, 1.0, -0.6]).unwrap();
        let mut counter = MatvecCounter::new();
        let p = solve_adjoint(&grid, &time, &terminal, 1.0, &SolverOptions::default(), &mut counter).unwrap();
        assert_eq!(p.last(), &terminal);
        let exact = dense_step_matrix(3, 0.25, 0.1).lu().solve(&DVector::from_row_slice(terminal.values())).unwrap();
        for i in 0..3 {
            assert!((p.first().values()[i] - exact[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn counter_log_matches_total() {
        let grid = Grid::build(2, &[9, 9], &[Interval::UNIT; 2], &[Interval::UNIT; 2]).unwrap();
        let time = TimeGridSpec::new(0.0, 1.0, 5).unwrap();
        let y0 = grid.field_from_fn(|x| x[0] * x[1]);
        let v = ControlField::from_fn(&grid, time, |t, x| t + x[0]);
        let mut counter = MatvecCounter::with_log();
        let y = solve_state(&grid, &time, &y0, &v, 0.5, &SolverOptions::default(), &mut counter).unwrap();
        solve_adjoint(&grid, &time, y.last(), 0.5, &SolverOptions::default(), &mut counter).unwrap();
        let log = counter.log().unwrap();
        assert_eq!(log.len(), 10);
        assert_eq!(log.iter().sum::<usize>() as u64, counter.count());
        assert!(counter.count() > 0);
    }

    #[test]
    fn sub_ranges_share_the_step() {
        let time = TimeGridSpec::new(0.0, 6.4, 6400).unwrap();
        let piece = time.sub_range(800, 800).unwrap();
        assert_eq!(piece.dt(), time.dt());
        assert_eq!(piece.step_count(), 800);
        assert!((piece.t_start() - 0.8).abs() < 1e-12);
        assert!(time.sub_range(6000, 401).is_err());
        assert!(TimeGridSpec::new(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn restriction_and_concatenation_round_trip() {
        let grid = line(6);
        let time = TimeGridSpec::new(0.0, 1.0, 10).unwrap();
        let v = ControlField::from_fn(&grid, time, |t, x| (3.0 * t).sin() + x[0]);
        let pieces = vec![v.restrict_steps(0, 3).unwrap(), v.restrict_steps(3, 3).unwrap(), v.restrict_steps(6, 4).unwrap()];
        assert_eq!(ControlField::concatenate(time, &pieces).unwrap(), v);
    }
}
