//! Shared fixtures: random tiny 1D instances and a dense reference model of
//! the discrete dynamics, assembled straight from the stencil with nalgebra.
#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use timesplit::{ControlField, ControlProblem, Grid, Interval, SolverOptions, TimeGridSpec};

pub const TIGHT: SolverOptions = SolverOptions { tol: 1e-13, max_iterations: Some(500) };

/// Random 1D problem with 3..=8 interior nodes and 4..=16 steps.
pub fn random_tiny(seed: u64) -> ControlProblem {
    let mut rng = StdRng::seed_from_u64(seed);
    let interior = rng.random_range(3..=8usize);
    let steps = rng.random_range(4..=16usize);
    let nodes = interior + 2;
    let h = 1.0 / (nodes - 1) as f64;
    // patch covering a random run of interior nodes
    let first = rng.random_range(1..=interior);
    let last = rng.random_range(first..=interior);
    let patch = Interval::new(first as f64 * h - 0.25 * h, last as f64 * h + 0.25 * h);
    let grid = Arc::new(Grid::build(1, &[nodes], &[Interval::UNIT], &[patch]).unwrap());
    let t_final = rng.random_range(0.2..1.0);
    let time = TimeGridSpec::new(0.0, t_final, steps).unwrap();
    let y0 = grid.field((0..interior).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let target = grid.field((0..interior).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let alpha = rng.random_range(0.05..1.0);
    let nu = rng.random_range(0.05..1.0);
    ControlProblem::new(grid, time, y0, target, alpha, nu).unwrap().with_solver(TIGHT)
}

pub fn random_control(problem: &ControlProblem, rng: &mut StdRng) -> ControlField {
    let len = problem.time_spec().step_count() * problem.grid().control_len();
    let values = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    ControlField::from_values(problem.grid(), *problem.time_spec(), values).unwrap()
}

/// Dense model of a 1D problem: `K = I - dt*nu*L`, `y_j = K^{-1}(y_{j-1} + dt B v_j)`.
pub struct DenseModel {
    pub k: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub dt: f64,
    pub weight: f64,
    pub alpha: f64,
    pub y0: DVector<f64>,
    pub target: DVector<f64>,
    pub steps: usize,
}

impl DenseModel {
    pub fn new(problem: &ControlProblem) -> Self {
        let grid = problem.grid();
        assert_eq!(grid.dim(), 1);
        let n = grid.interior_node_count();
        let h = grid.spacing()[0];
        let dt = problem.time_spec().dt();
        let s = dt * problem.nu() / (h * h);
        let k = DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
            0 => 1.0 + 2.0 * s,
            1 => -s,
            _ => 0.0,
        });
        let m = grid.control_len();
        let mut b = DMatrix::zeros(n, m);
        for (c, &node) in grid.control_mask().iter().enumerate() {
            b[(node, c)] = 1.0;
        }
        Self {
            k,
            b,
            dt,
            weight: h,
            alpha: problem.alpha(),
            y0: DVector::from_row_slice(problem.y0().values()),
            target: DVector::from_row_slice(problem.y_target().values()),
            steps: problem.time_spec().step_count(),
        }
    }

    pub fn states(&self, v: &ControlField) -> Vec<DVector<f64>> {
        let lu = self.k.clone().lu();
        let mut out = vec![self.y0.clone()];
        for j in 1..=self.steps {
            let source = &self.b * DVector::from_row_slice(v.slice_values(j));
            let rhs = out[j - 1].clone() + source * self.dt;
            out.push(lu.solve(&rhs).unwrap());
        }
        out
    }

    /// `p_N = y_N - target`, `K p_{j-1} = p_j`.
    pub fn adjoints(&self, final_state: &DVector<f64>) -> Vec<DVector<f64>> {
        let lu = self.k.clone().lu();
        let mut out = vec![final_state - &self.target];
        for _ in 0..self.steps {
            let next = lu.solve(out.last().unwrap()).unwrap();
            out.push(next);
        }
        out.reverse();
        out
    }

    /// Final-state map `v -> y_N` for a zero initial state, as a dense matrix.
    pub fn control_to_final(&self) -> DMatrix<f64> {
        let m = self.b.ncols();
        let inv = self.k.clone().try_inverse().unwrap();
        let mut g = DMatrix::zeros(self.k.nrows(), self.steps * m);
        let mut propagate = inv.clone();
        // slice j reaches y_N through N - j + 1 inverse steps
        for j in (1..=self.steps).rev() {
            let block = &propagate * &self.b * self.dt;
            g.view_mut((0, (j - 1) * m), (self.k.nrows(), m)).copy_from(&block);
            propagate = &inv * propagate;
        }
        g
    }

    /// Minimizer of the dense cost via its normal equations, flattened.
    pub fn optimum(&self) -> Vec<f64> {
        let g = self.control_to_final();
        let mut free = self.y0.clone();
        let lu = self.k.clone().lu();
        for _ in 0..self.steps {
            free = lu.solve(&free).unwrap();
        }
        let unknowns = g.ncols();
        let normal = g.transpose() * &g + DMatrix::identity(unknowns, unknowns) * (self.alpha * self.dt);
        let rhs = -(g.transpose() * (free - &self.target));
        normal.lu().solve(&rhs).unwrap().iter().copied().collect()
    }

    pub fn cost(&self, v: &ControlField) -> f64 {
        let y = self.states(v);
        let r = &y[self.steps] - &self.target;
        let control_sq: f64 = v.values().iter().map(|x| x * x).sum();
        0.5 * self.weight * r.dot(&r) + 0.5 * self.alpha * self.dt * self.weight * control_sq
    }
}

/// Golden-section minimization of a unimodal scalar function on `[a, b]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
