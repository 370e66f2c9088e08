//! Benchmark orchestration: builds a problem from a [`RunConfig`], runs the
//! optimal-step gradient baseline and/or the intermediate-targets method,
//! and writes one CSV trace per run.

pub mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

use crate::control_problem::{ControlProblem, StopRule};
use crate::discretization::{Grid, SpatialField};
use crate::error::Result;
use crate::parallel_driver::{IntermediateTargets, OuterConfig};
use crate::propagators::{MatvecCounter, SolverOptions, TimeGridSpec};

pub use config::{parse_config, parse_config_str, FieldSpec, Mode, RunConfig};

pub const CSV_HEADER: &str = "iter,J,misfit,penalty,theta,matvec_seq,matvec_par,wall_ms";

/// Relative slack above the baseline's final cost used to compare methods.
pub const MATCH_TOLERANCE: f64 = 0.01;

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_CONFIG_ERROR: i32 = 1;
pub const EXIT_MAX_ITERATIONS: i32 = 2;

/// One CSV row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub cost: f64,
    pub misfit: f64,
    pub penalty: f64,
    pub theta: f64,
    pub matvec_seq: u64,
    pub matvec_par: u64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub mode: Mode,
    pub rows: Vec<TraceRow>,
    pub converged: bool,
}

impl Trace {
    pub fn final_row(&self) -> &TraceRow {
        self.rows.last().expect("a trace has at least one row")
    }

    /// First row whose cost is at most `threshold`.
    pub fn first_below(&self, threshold: f64) -> Option<&TraceRow> {
        self.rows.iter().find(|r| r.cost <= threshold)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{},{},{:.3}",
                r.iter, r.cost, r.misfit, r.penalty, r.theta, r.matvec_seq, r.matvec_par, r.wall_ms
            )
            .unwrap();
        }
        out
    }

    pub fn summary_line(&self, speedup: Option<f64>) -> String {
        let last = self.final_row();
        let speedup = speedup.map_or_else(|| "n/a".to_string(), |s| format!("{s:.3}"));
        format!(
            "final_J={:e} matvec_seq={} matvec_par={} speedup={speedup}",
            last.cost, last.matvec_seq, last.matvec_par
        )
    }
}

/// Matvecs the baseline needs to get within [`MATCH_TOLERANCE`] of its own
/// final cost, divided by the parallel-equivalent matvecs the
/// intermediate-targets run needs for the same cost.
pub fn matvec_speedup(baseline: &Trace, intermediate: &Trace) -> Option<f64> {
    let threshold = baseline.final_row().cost * (1.0 + MATCH_TOLERANCE);
    let reference = baseline.first_below(threshold)?;
    let candidate = intermediate.first_below(threshold)?;
    if candidate.matvec_par == 0 {
        return None;
    }
    Some(reference.matvec_seq as f64 / candidate.matvec_par as f64)
}

pub fn build_grid(config: &RunConfig) -> Result<Grid> {
    Grid::build(config.dim, &config.nodes_per_axis, &config.domain_bounds, &config.control_bounds)
}

fn sample(grid: &Grid, spec: &FieldSpec, seed: u64) -> SpatialField {
    match spec {
        FieldSpec::Zero | FieldSpec::FreeEvolution => grid.zeros(),
        FieldSpec::Gaussian { center, sigma, amplitude } => grid.field_from_fn(|x| {
            let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
            amplitude * (-r2 / (2.0 * sigma * sigma)).exp()
        }),
        FieldSpec::Indicator(bounds) => grid.field_from_fn(|x| {
            let inside = x
                .iter()
                .zip(bounds)
                .all(|(&c, b)| c >= b.lower - 1e-12 && c <= b.upper + 1e-12);
            if inside {
                1.0
            } else {
                0.0
            }
        }),
        FieldSpec::Random { amplitude } => {
            let mut rng = StdRng::seed_from_u64(seed);
            let values = (0..grid.interior_node_count())
                .map(|_| amplitude * rng.random_range(-1.0..=1.0))
                .collect();
            grid.field(values).expect("length matches the grid")
        }
    }
}

pub fn build_problem(config: &RunConfig) -> Result<ControlProblem> {
    let grid = Arc::new(build_grid(config)?);
    let time = TimeGridSpec::new(0.0, config.t_final, config.step_count)?;
    let y0 = sample(&grid, &config.y0, config.seed);
    let solver = SolverOptions { tol: config.cg_tol, max_iterations: None };
    let problem = ControlProblem::new(grid.clone(), time, y0, grid.zeros(), config.alpha, config.nu)?.with_solver(solver);
    let target = match config.y_target {
        FieldSpec::FreeEvolution => {
            let free = problem.state(&problem.zero_control(), &mut MatvecCounter::new())?;
            free.last().clone()
        }
        ref spec => sample(&grid, spec, config.seed.wrapping_add(1)),
    };
    problem.restricted(time, problem.y0().clone(), target)
}

pub fn run_baseline(problem: &ControlProblem, config: &RunConfig) -> Result<Trace> {
    let mut counter = MatvecCounter::new();
    let stop = StopRule::tolerance(config.gradient_rtol, config.max_outer);
    let outcome = problem.optimal_step_gradient(&problem.zero_control(), stop, &mut counter)?;
    let rows = outcome
        .history
        .iter()
        .map(|r| TraceRow {
            iter: r.iteration,
            cost: r.cost,
            misfit: r.misfit,
            penalty: r.penalty,
            theta: r.step,
            matvec_seq: r.matvecs,
            matvec_par: r.matvecs,
            wall_ms: r.wall_time.as_secs_f64() * 1e3,
        })
        .collect();
    Ok(Trace { mode: Mode::Baseline, rows, converged: outcome.converged })
}

pub fn outer_config(config: &RunConfig) -> OuterConfig {
    OuterConfig {
        windows: config.windows,
        inner: StopRule { max_iterations: config.inner_iterations, gradient_rtol: config.inner_rtol },
        max_outer: config.max_outer,
        gradient_rtol: config.gradient_rtol,
        worker_count: config.worker_count,
    }
}

pub fn run_intermediate_targets(problem: &ControlProblem, config: &RunConfig) -> Result<Trace> {
    let outcome = IntermediateTargets::new(problem, outer_config(config))?.run()?;
    let rows = outcome
        .history
        .iter()
        .map(|m| TraceRow {
            iter: m.outer_index,
            cost: m.cost,
            misfit: m.misfit,
            penalty: m.penalty,
            theta: m.theta,
            matvec_seq: m.matvec_sequential,
            matvec_par: m.matvec_parallel,
            wall_ms: m.wall_time.as_secs_f64() * 1e3,
        })
        .collect();
    Ok(Trace { mode: Mode::IntermediateTargets, rows, converged: outcome.converged })
}

/// Where the trace of `mode` goes; `both` splits `output` into two files.
pub fn trace_path(output: &Path, requested: Mode, mode: Mode) -> PathBuf {
    if requested != Mode::Both {
        return output.to_path_buf();
    }
    let stem = output.file_stem().map_or_else(|| "trace".into(), |s| s.to_string_lossy().into_owned());
    let ext = output.extension().map_or_else(|| "csv".into(), |e| e.to_string_lossy().into_owned());
    output.with_file_name(format!("{stem}.{mode}.{ext}"))
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    /// Runs in execution order with the file each trace went to.
    pub runs: Vec<(Trace, PathBuf)>,
    pub speedup: Option<f64>,
}

impl BenchmarkReport {
    pub fn exit_code(&self) -> i32 {
        if self.runs.iter().all(|(t, _)| t.converged) {
            EXIT_CONVERGED
        } else {
            EXIT_MAX_ITERATIONS
        }
    }

    /// One summary line per run; the speedup goes on the last one.
    pub fn summary_lines(&self) -> Vec<String> {
        let last = self.runs.len().saturating_sub(1);
        self.runs
            .iter()
            .enumerate()
            .map(|(i, (trace, _))| {
                let speedup = if i == last { self.speedup } else { None };
                if self.runs.len() > 1 {
                    format!("[{}] {}", trace.mode, trace.summary_line(speedup))
                } else {
                    trace.summary_line(speedup)
                }
            })
            .collect()
    }

    pub fn trace(&self, mode: Mode) -> Option<&Trace> {
        self.runs.iter().map(|(t, _)| t).find(|t| t.mode == mode)
    }
}

/// Runs the configured mode(s) and writes the CSV trace(s).
pub fn run_benchmark(config: &RunConfig) -> Result<BenchmarkReport> {
    let problem = build_problem(config)?;
    let modes: &[Mode] = match config.mode {
        Mode::Both => &[Mode::Baseline, Mode::IntermediateTargets],
        Mode::Baseline => &[Mode::Baseline],
        Mode::IntermediateTargets => &[Mode::IntermediateTargets],
    };
    let mut runs = Vec::new();
    for &mode in modes {
        let trace = match mode {
            Mode::Baseline => run_baseline(&problem, config)?,
            _ => run_intermediate_targets(&problem, config)?,
        };
        let path = trace_path(&config.output, config.mode, mode);
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, trace.to_csv())?;
        runs.push((trace, path));
    }
    let speedup = match runs.as_slice() {
        [(baseline, _), (intermediate, _)] => matvec_speedup(baseline, intermediate),
        _ => None,
    };
    Ok(BenchmarkReport { runs, speedup })
}
