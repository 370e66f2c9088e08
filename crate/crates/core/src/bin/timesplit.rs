use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use timesplit::bench::{self, EXIT_CONFIG_ERROR};

/// Benchmark the intermediate-targets method against the optimal-step
/// gradient baseline and write CSV convergence traces.
#[derive(Debug, Parser)]
#[command(name = "timesplit", version)]
struct Cli {
    /// Run configuration (flat `key = value` file).
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long)]
    mode: Option<String>,
    #[arg(long = "N")]
    windows: Option<String>,
    #[arg(long = "inner-iters", alias = "inner-iterations")]
    inner_iterations: Option<String>,
    #[arg(long = "inner-rtol")]
    inner_rtol: Option<String>,
    #[arg(long = "max-outer")]
    max_outer: Option<String>,
    #[arg(long = "rtol", alias = "gradient-rtol")]
    gradient_rtol: Option<String>,
    #[arg(long = "workers", alias = "worker-count")]
    worker_count: Option<String>,
    /// CSV output path.
    #[arg(long = "out", alias = "output")]
    output: Option<String>,

    #[arg(long)]
    dim: Option<String>,
    #[arg(long = "nodes-per-axis")]
    nodes_per_axis: Option<String>,
    #[arg(long = "domain-bounds")]
    domain_bounds: Option<String>,
    #[arg(long = "control-bounds")]
    control_bounds: Option<String>,
    #[arg(long = "T")]
    t_final: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    nu: Option<String>,
    #[arg(long)]
    y0: Option<String>,
    #[arg(long = "y-target")]
    y_target: Option<String>,
    #[arg(long = "cg-tol")]
    cg_tol: Option<String>,
    #[arg(long)]
    seed: Option<String>,
}

impl Cli {
    fn overrides(&self) -> Vec<(String, String)> {
        [
            ("mode", &self.mode),
            ("N", &self.windows),
            ("inner_iterations", &self.inner_iterations),
            ("inner_rtol", &self.inner_rtol),
            ("max_outer", &self.max_outer),
            ("gradient_rtol", &self.gradient_rtol),
            ("worker_count", &self.worker_count),
            ("output", &self.output),
            ("dim", &self.dim),
            ("nodes_per_axis", &self.nodes_per_axis),
            ("domain_bounds", &self.domain_bounds),
            ("control_bounds", &self.control_bounds),
            ("T", &self.t_final),
            ("dt", &self.dt),
            ("alpha", &self.alpha),
            ("nu", &self.nu),
            ("y0", &self.y0),
            ("y_target", &self.y_target),
            ("cg_tol", &self.cg_tol),
            ("seed", &self.seed),
        ]
        .into_iter()
        .filter_map(|(key, value)| value.as_ref().map(|v| (key.to_string(), v.clone())))
        .collect()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match bench::parse_config(cli.config.as_deref(), &cli.overrides()) {
        Ok(config) => config,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(EXIT_CONFIG_ERROR as u8);
        }
    };
    match bench::run_benchmark(&config) {
        Ok(report) => {
            for line in report.summary_lines() {
                println!("{line}");
            }
            for (trace, path) in &report.runs {
                if !trace.converged {
                    eprintln!("warning: {} stopped before reaching the gradient tolerance", trace.mode);
                }
                eprintln!("wrote {}", path.display());
            }
            ExitCode::from(report.exit_code() as u8)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(EXIT_CONFIG_ERROR as u8)
        }
    }
}
