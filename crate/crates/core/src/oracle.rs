//! Dense reference solution of small control problems.
//!
//! The control-to-final-state map is affine, `y(T) = F y0 + G v`. The oracle
//! assembles `G` column by column from unit controls and solves the normal
//! equations `(G^T W G + alpha W_H) v = -G^T W (F y0 - y_target)` with a
//! Cholesky factorization.

use nalgebra::{DMatrix, DVector};

use crate::control_problem::ControlProblem;
use crate::error::{Error, Result};
use crate::propagators::{ControlField, MatvecCounter};

/// Default limit on `step_count * control_len`.
pub const DEFAULT_ORACLE_CAP: usize = 2000;

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub control: ControlField,
    pub cost: f64,
}

pub fn oracle_kkt_solve(problem: &ControlProblem) -> Result<OracleSolution> {
    oracle_kkt_solve_capped(problem, DEFAULT_ORACLE_CAP)
}

pub fn oracle_kkt_solve_capped(problem: &ControlProblem, cap: usize) -> Result<OracleSolution> {
    let grid = problem.grid();
    let time = *problem.time_spec();
    let unknowns = time.step_count() * grid.control_len();
    if unknowns > cap {
        return Err(Error::OracleTooLarge { size: unknowns, cap });
    }
    let mut counter = MatvecCounter::new();
    let rows = grid.interior_node_count();

    let mut g = DMatrix::<f64>::zeros(rows, unknowns);
    let mut unit = vec![0.0; unknowns];
    for column in 0..unknowns {
        unit[column] = 1.0;
        let v = ControlField::from_values(grid, time, unit.clone())?;
        let y_final = problem.homogeneous_final_state(&v, &mut counter)?;
        g.set_column(column, &DVector::from_row_slice(y_final.values()));
        unit[column] = 0.0;
    }

    let free = problem.state(&problem.zero_control(), &mut counter)?;
    let offset = DVector::from_row_slice(free.last().sub(problem.y_target())?.values());

    let w = grid.node_weight();
    let w_h = w * time.dt();
    let mut normal = g.transpose() * &g * w;
    for i in 0..unknowns {
        normal[(i, i)] += problem.alpha() * w_h;
    }
    let rhs = -(g.transpose() * offset) * w;
    let solution = normal.cholesky().ok_or(Error::SingularSystem)?.solve(&rhs);

    let control = ControlField::from_values(grid, time, solution.iter().copied().collect())?;
    let cost = problem.evaluate(&control, &mut counter)?.cost;
    Ok(OracleSolution { control, cost })
}
