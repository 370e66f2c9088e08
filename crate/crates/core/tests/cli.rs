use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_timesplit");

const TINY: &str = "\
dim = 1
nodes_per_axis = 12
domain_bounds = [0,1]
control_bounds = [0.25,0.75]
T = 0.5
dt = 1/20
alpha = 0.1
nu = 0.2
y0 = gaussian(0.5, 0.1, 1.0)
y_target = indicator([0.3,0.7])
N = 4
max_outer = 400
gradient_rtol = 1e-6
";

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn timesplit(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

/// Parsed CSV rows; `wall_ms` is dropped.
fn read_trace(path: &Path) -> Vec<Vec<f64>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iter,J,misfit,penalty,theta,matvec_seq,matvec_par,wall_ms"));
    lines
        .map(|line| {
            let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
            assert_eq!(fields.len(), 8);
            fields[..7].to_vec()
        })
        .collect()
}

fn check_trace_invariants(rows: &[Vec<f64>], monotone: bool) {
    assert!(!rows.is_empty());
    for (k, row) in rows.iter().enumerate() {
        assert_eq!(row[0], k as f64, "iter column");
        assert!(row[4].is_finite(), "theta column");
        assert!(row[6] <= row[5], "matvec_par above matvec_seq");
    }
    if monotone {
        for pair in rows.windows(2) {
            assert!(pair[1][1] <= pair[0][1], "J increased");
        }
    }
}

fn summary_fields(stdout: &str) -> Vec<(String, String)> {
    let line = stdout.lines().last().expect("a summary line");
    let line = line.rsplit("] ").next().unwrap();
    line.split(' ')
        .map(|pair| {
            let (key, value) = pair.split_once('=').expect("key=value");
            (key.to_string(), value.to_string())
        })
        .collect()
}

#[test]
fn intermediate_targets_run_converges_and_writes_csv() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "tiny.conf", TINY);
    let out = dir.path().join("trace.csv");
    let output = timesplit(&[
        "--config",
        config.to_str().unwrap(),
        "--mode",
        "intermediate-targets",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "{}", String::from_utf8_lossy(&output.stderr));
    let rows = read_trace(&out);
    check_trace_invariants(&rows, true);
    // theta vanishes only on the final, converged row
    for row in &rows[..rows.len() - 1] {
        assert_ne!(row[4], 0.0);
    }

    let stdout = String::from_utf8(output.stdout).unwrap();
    let fields = summary_fields(&stdout);
    let keys: Vec<&str> = fields.iter().map(|(k, _)| k.as_str()).collect();
    assert_eq!(keys, ["final_J", "matvec_seq", "matvec_par", "speedup"]);
    assert_eq!(fields[0].1.parse::<f64>().unwrap(), rows.last().unwrap()[1]);
    assert_eq!(fields[1].1.parse::<u64>().unwrap() as f64, rows.last().unwrap()[5]);
    assert_eq!(fields[2].1.parse::<u64>().unwrap() as f64, rows.last().unwrap()[6]);
    assert_eq!(fields[3].1, "n/a");
}

#[test]
fn both_modes_write_two_traces_and_a_speedup() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "tiny.conf", TINY);
    let out = dir.path().join("run.csv");
    let output = timesplit(&["--config", config.to_str().unwrap(), "--mode", "both", "--out", out.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(0), "{}", String::from_utf8_lossy(&output.stderr));
    let baseline = read_trace(&dir.path().join("run.baseline.csv"));
    let intermediate = read_trace(&dir.path().join("run.intermediate-targets.csv"));
    check_trace_invariants(&baseline, true);
    check_trace_invariants(&intermediate, true);
    for row in &baseline {
        assert_eq!(row[5], row[6], "baseline has no parallel section");
    }
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 2);
    let speedup = &summary_fields(&stdout)[3].1;
    assert!(speedup.parse::<f64>().unwrap() > 0.0);
}

#[test]
fn iteration_cap_exits_with_two_and_still_writes() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "tiny.conf", TINY);
    let out = dir.path().join("capped.csv");
    let output = timesplit(&[
        "--config",
        config.to_str().unwrap(),
        "--mode",
        "intermediate-targets",
        "--max-outer",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert_eq!(read_trace(&out).len(), 3);
}

#[test]
fn free_evolution_baseline_is_a_single_row() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "tiny.conf", TINY);
    let out = dir.path().join("free.csv");
    let output = timesplit(&[
        "--config",
        config.to_str().unwrap(),
        "--mode",
        "baseline",
        "--y-target",
        "free-evolution-of-y0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0));
    let rows = read_trace(&out);
    assert_eq!(rows.len(), 1);
    assert!(rows[0][1].abs() <= 1e-20);
    assert!(rows[0][5] > 0.0);
}

#[test]
fn reruns_are_identical_apart_from_timing() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "tiny.conf", TINY);
    let mut traces = Vec::new();
    for (name, workers) in [("a.csv", "1"), ("b.csv", "3")] {
        let out = dir.path().join(name);
        let output = timesplit(&[
            "--config",
            config.to_str().unwrap(),
            "--mode",
            "intermediate-targets",
            "--workers",
            workers,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(output.status.code(), Some(0));
        traces.push(read_trace(&out));
    }
    assert_eq!(traces[0], traces[1]);
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("never.csv");
    let out = out.to_str().unwrap();

    let ragged = write_config(dir.path(), "ragged.conf", &TINY.replace("dt = 1/20", "dt = 0.3"));
    let unknown = write_config(dir.path(), "unknown.conf", &format!("{TINY}colour = blue\n"));
    let missing_key = write_config(dir.path(), "missing.conf", &TINY.replace("alpha = 0.1\n", ""));
    let bad_mode = write_config(dir.path(), "mode.conf", &format!("{TINY}mode = sideways\n"));
    for config in [&ragged, &unknown, &missing_key, &bad_mode] {
        let output = timesplit(&["--config", config.to_str().unwrap(), "--out", out]);
        assert_eq!(output.status.code(), Some(1), "{}", config.display());
        assert!(!output.stderr.is_empty());
    }
    let absent = dir.path().join("absent.conf");
    assert_eq!(timesplit(&["--config", absent.to_str().unwrap()]).status.code(), Some(1));
    assert!(!Path::new(out).exists());
}

#[test]
fn flags_override_the_file() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "tiny.conf", TINY);
    let out = dir.path().join("override.csv");
    // the file's dt would leave a fractional step count; the flag fixes it
    let ragged = write_config(dir.path(), "ragged.conf", &TINY.replace("dt = 1/20", "dt = 0.3"));
    let output = timesplit(&[
        "--config",
        ragged.to_str().unwrap(),
        "--dt",
        "0.05",
        "--mode",
        "baseline",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0));
    let reference = dir.path().join("reference.csv");
    let output = timesplit(&[
        "--config",
        config.to_str().unwrap(),
        "--mode",
        "baseline",
        "--out",
        reference.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0));
    assert_eq!(read_trace(&out), read_trace(&reference));
}
