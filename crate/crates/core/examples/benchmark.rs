//! Runs a benchmark configuration in `both` mode and prints the points of the
//! two convergence plots: cost against iterations and against matvecs.
//!
//! Run with `cargo run --release --example benchmark [-- path/to/config]`.
//! Without an argument the scaled 2D experiment in `examples/configs` is used.

use std::path::PathBuf;

use timesplit::bench::{self, Mode, MATCH_TOLERANCE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args_os().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/scaled_experiment.conf")
    });
    let config = bench::parse_config(Some(&path), &[("mode".into(), "both".into())])?;
    let report = bench::run_benchmark(&config)?;

    let baseline = report.trace(Mode::Baseline).expect("both mode runs the baseline");
    let intermediate = report.trace(Mode::IntermediateTargets).expect("both mode runs the method");
    println!("{:>6}  {:>13}  {:>13}  {:>10}  {:>10}", "iter", "J baseline", "J targets", "mv base", "mv par");
    let rows = baseline.rows.len().max(intermediate.rows.len());
    let stride = (rows / 25).max(1);
    for k in (0..rows).step_by(stride) {
        let cell = |trace: &bench::Trace, f: fn(&bench::TraceRow) -> String| {
            trace.rows.get(k).map_or_else(|| "-".to_string(), f)
        };
        println!(
            "{k:>6}  {:>13}  {:>13}  {:>10}  {:>10}",
            cell(baseline, |r| format!("{:.6e}", r.cost)),
            cell(intermediate, |r| format!("{:.6e}", r.cost)),
            cell(baseline, |r| r.matvec_seq.to_string()),
            cell(intermediate, |r| r.matvec_par.to_string()),
        );
    }

    let threshold = baseline.final_row().cost * (1.0 + MATCH_TOLERANCE);
    if let (Some(b), Some(t)) = (baseline.first_below(threshold), intermediate.first_below(threshold)) {
        println!(
            "J <= {threshold:.6e}: baseline at iteration {} ({} matvecs), intermediate targets at iteration {} ({} parallel matvecs)",
            b.iter, b.matvec_seq, t.iter, t.matvec_par
        );
    }
    for line in report.summary_lines() {
        println!("{line}");
    }
    for (_, path) in &report.runs {
        println!("wrote {}", path.display());
    }
    Ok(())
}
