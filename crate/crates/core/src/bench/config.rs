//! Flat `key = value` run configuration.
//!
//! ```text
//! # full-scale 2D setup
//! dim = 2
//! nodes_per_axis = 33
//! domain_bounds = [0,1]x[0,1]
//! control_bounds = [1/3,2/3]x[1/3,2/3]
//! T = 6.4
//! dt = 1e-2
//! alpha = 1e-2
//! nu = 1e-2
//! y0 = gaussian(0.5, 0.5, 0.1, 1.0)
//! y_target = indicator([1/3,2/3]x[1/3,2/3])
//! mode = both
//! N = 8
//! ```
//!
//! Numbers may be written as fractions (`1/3`). A single axis value
//! (`nodes_per_axis = 33`, `domain_bounds = [0,1]`) is repeated on every axis.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::discretization::Interval;
use crate::error::{Error, Result};

/// Which solver(s) a benchmark runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Baseline,
    IntermediateTargets,
    Both,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "intermediate-targets" => Ok(Mode::IntermediateTargets),
            "both" => Ok(Mode::Both),
            other => Err(Error::Config(format!(
                "unknown mode '{other}', expected baseline, intermediate-targets or both"
            ))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Baseline => "baseline",
            Mode::IntermediateTargets => "intermediate-targets",
            Mode::Both => "both",
        })
    }
}

/// Named generators for the initial state and the target.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldSpec {
    Zero,
    /// `amplitude * exp(-|x - center|^2 / (2 sigma^2))`
    Gaussian { center: Vec<f64>, sigma: f64, amplitude: f64 },
    /// 1 inside the box, 0 outside.
    Indicator(Vec<Interval>),
    /// Final state of the uncontrolled evolution of `y0`.
    FreeEvolution,
    /// Uniform values in `[-amplitude, amplitude]` drawn from the run seed.
    Random { amplitude: f64 },
}

impl FieldSpec {
    fn parse(text: &str, dim: usize) -> Result<Self> {
        let text = text.trim();
        match text {
            "zero" => return Ok(FieldSpec::Zero),
            "free-evolution-of-y0" => return Ok(FieldSpec::FreeEvolution),
            _ => {}
        }
        let (name, args) = text
            .strip_suffix(')')
            .and_then(|t| t.split_once('('))
            .ok_or_else(|| Error::Config(format!("unrecognized field spec '{text}'")))?;
        match name.trim() {
            "gaussian" => {
                let numbers = args.split(',').map(parse_number).collect::<Result<Vec<_>>>()?;
                // center coordinates, then sigma and amplitude
                if numbers.len() != dim + 2 && !(dim == 1 && numbers.len() == 4) {
                    return Err(Error::Config(format!(
                        "gaussian in {dim}D takes {} arguments, got {}",
                        dim + 2,
                        numbers.len()
                    )));
                }
                let (center, rest) = numbers.split_at(numbers.len() - 2);
                let (sigma, amplitude) = (rest[0], rest[1]);
                if !(sigma > 0.0) {
                    return Err(Error::Config(format!("gaussian sigma must be positive, got {sigma}")));
                }
                Ok(FieldSpec::Gaussian { center: center[..dim].to_vec(), sigma, amplitude })
            }
            "indicator" => Ok(FieldSpec::Indicator(parse_intervals(args, dim)?)),
            "random" => Ok(FieldSpec::Random { amplitude: parse_number(args)? }),
            other => Err(Error::Config(format!("unknown field generator '{other}'"))),
        }
    }
}

/// Everything needed to set up and run one benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub nodes_per_axis: Vec<usize>,
    pub domain_bounds: Vec<Interval>,
    pub control_bounds: Vec<Interval>,
    pub t_final: f64,
    pub dt: f64,
    pub step_count: usize,
    pub alpha: f64,
    pub nu: f64,
    pub y0: FieldSpec,
    pub y_target: FieldSpec,
    pub mode: Mode,
    pub windows: usize,
    pub inner_iterations: usize,
    pub inner_rtol: Option<f64>,
    pub max_outer: usize,
    pub gradient_rtol: f64,
    pub worker_count: usize,
    pub cg_tol: f64,
    pub output: PathBuf,
    pub seed: u64,
}

const KEYS: &[&str] = &[
    "dim",
    "nodes_per_axis",
    "domain_bounds",
    "control_bounds",
    "T",
    "dt",
    "alpha",
    "nu",
    "y0",
    "y_target",
    "mode",
    "N",
    "inner_iterations",
    "inner_rtol",
    "max_outer",
    "gradient_rtol",
    "worker_count",
    "cg_tol",
    "output",
    "seed",
];

const REQUIRED: &[&str] = &["dim", "nodes_per_axis", "T", "dt", "alpha", "nu", "y0", "y_target"];

/// Maps flag spellings onto configuration keys.
pub fn canonical_key(key: &str) -> Option<&'static str> {
    let key = key.trim_start_matches("--");
    let alias = match key {
        "inner-iters" => "inner_iterations",
        "rtol" => "gradient_rtol",
        "workers" => "worker_count",
        "out" => "output",
        _ => "",
    };
    if !alias.is_empty() {
        return Some(alias);
    }
    let normalized = key.replace('-', "_");
    KEYS.iter().copied().find(|&k| k == normalized)
}

/// Reads `path` (if any) and applies `overrides` on top of it.
pub fn parse_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut entries = BTreeMap::new();
    if let Some(path) = path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        entries = parse_entries(&text)?;
    }
    for (key, value) in overrides {
        let canonical = canonical_key(key).ok_or_else(|| Error::Config(format!("unknown key '{key}'")))?;
        entries.insert(canonical.to_string(), value.trim().to_string());
    }
    RunConfig::from_entries(&entries)
}

/// Parses configuration text without overrides.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    RunConfig::from_entries(&parse_entries(text)?)
}

fn parse_entries(text: &str) -> Result<BTreeMap<String, String>> {
    let mut entries = BTreeMap::new();
    for (number, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", number + 1)))?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!("line {}: unknown key '{key}'", number + 1)));
        }
        entries.insert(key.to_string(), value.trim().to_string());
    }
    Ok(entries)
}

impl RunConfig {
    fn from_entries(entries: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(missing) = REQUIRED.iter().find(|k| !entries.contains_key(**k)) {
            return Err(Error::Config(format!("missing required key '{missing}'")));
        }
        let get = |key: &str| entries.get(key).map(String::as_str);

        let dim: usize = parse_value("dim", get("dim").unwrap())?;
        if dim != 1 && dim != 2 {
            return Err(Error::Config(format!("dim must be 1 or 2, got {dim}")));
        }
        let nodes_per_axis = per_axis(parse_list("nodes_per_axis", get("nodes_per_axis").unwrap())?, dim, "nodes_per_axis")?;
        let domain_bounds = match get("domain_bounds") {
            Some(text) => parse_intervals(text, dim)?,
            None => vec![Interval::UNIT; dim],
        };
        let control_bounds = match get("control_bounds") {
            Some(text) => parse_intervals(text, dim)?,
            None => domain_bounds.clone(),
        };

        let t_final = parse_number(get("T").unwrap())?;
        let dt = parse_number(get("dt").unwrap())?;
        let alpha = parse_number(get("alpha").unwrap())?;
        let nu = parse_number(get("nu").unwrap())?;
        for (name, value) in [("T", t_final), ("dt", dt), ("alpha", alpha), ("nu", nu)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {value}")));
            }
        }
        let ratio = t_final / dt;
        let step_count = ratio.round();
        if step_count < 1.0 || (ratio - step_count).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::Config(format!("T/dt = {ratio} is not a positive integer step count")));
        }
        let step_count = step_count as usize;

        let y0 = FieldSpec::parse(get("y0").unwrap(), dim)?;
        if y0 == FieldSpec::FreeEvolution {
            return Err(Error::Config("y0 cannot be free-evolution-of-y0".into()));
        }
        let y_target = FieldSpec::parse(get("y_target").unwrap(), dim)?;

        let mode = get("mode").map_or(Ok(Mode::IntermediateTargets), str::parse)?;
        let windows = get("N").map_or(Ok(1), |v| parse_value("N", v))?;
        if windows == 0 || windows > step_count {
            return Err(Error::Config(format!("N must lie in 1..={step_count}, got {windows}")));
        }
        let inner_iterations = get("inner_iterations").map_or(Ok(1), |v| parse_value("inner_iterations", v))?;
        if inner_iterations == 0 {
            return Err(Error::Config("inner_iterations must be at least 1".into()));
        }
        let inner_rtol = get("inner_rtol").map(parse_number).transpose()?;
        let max_outer = get("max_outer").map_or(Ok(1000), |v| parse_value("max_outer", v))?;
        let gradient_rtol = get("gradient_rtol").map_or(Ok(1e-6), parse_number)?;
        let cg_tol = get("cg_tol").map_or(Ok(1e-10), parse_number)?;
        for (name, value) in [("gradient_rtol", gradient_rtol), ("cg_tol", cg_tol)] {
            if !(value > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {value}")));
            }
        }
        let worker_count = get("worker_count").map_or(Ok(1), |v| parse_value("worker_count", v))?;
        if worker_count == 0 {
            return Err(Error::Config("worker_count must be at least 1".into()));
        }
        let output = PathBuf::from(get("output").unwrap_or("trace.csv"));
        let seed = get("seed").map_or(Ok(0), |v| parse_value("seed", v))?;

        Ok(RunConfig {
            dim,
            nodes_per_axis,
            domain_bounds,
            control_bounds,
            t_final,
            dt,
            step_count,
            alpha,
            nu,
            y0,
            y_target,
            mode,
            windows,
            inner_iterations,
            inner_rtol,
            max_outer,
            gradient_rtol,
            worker_count,
            cg_tol,
            output,
            seed,
        })
    }
}

fn parse_value<T: FromStr>(key: &str, text: &str) -> Result<T> {
    text.trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{text}' for {key}")))
}

fn parse_list(key: &str, text: &str) -> Result<Vec<usize>> {
    text.split([',', 'x']).map(|part| parse_value(key, part)).collect()
}

fn per_axis<T: Clone>(values: Vec<T>, dim: usize, key: &str) -> Result<Vec<T>> {
    match values.len() {
        1 => Ok(vec![values[0].clone(); dim]),
        n if n == dim => Ok(values),
        n => Err(Error::Config(format!("{key} needs 1 or {dim} entries, got {n}"))),
    }
}

/// A decimal number or a fraction `a/b`.
fn parse_number(text: &str) -> Result<f64> {
    let text = text.trim();
    let invalid = || Error::Config(format!("invalid number '{text}'"));
    let value = match text.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|_| invalid())?;
            let den: f64 = den.trim().parse().map_err(|_| invalid())?;
            num / den
        }
        None => text.parse().map_err(|_| invalid())?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(invalid())
    }
}

/// `[a,b]x[c,d]`, one bracketed pair per axis.
fn parse_intervals(text: &str, dim: usize) -> Result<Vec<Interval>> {
    let mut intervals = Vec::new();
    let mut rest = text.trim();
    while !rest.is_empty() {
        let open = rest
            .strip_prefix('[')
            .ok_or_else(|| Error::Config(format!("expected '[' in interval list '{text}'")))?;
        let (body, tail) = open
            .split_once(']')
            .ok_or_else(|| Error::Config(format!("unterminated interval in '{text}'")))?;
        let (lower, upper) = body
            .split_once(',')
            .ok_or_else(|| Error::Config(format!("interval '[{body}]' needs two bounds")))?;
        intervals.push(Interval::new(parse_number(lower)?, parse_number(upper)?));
        rest = tail.trim_start();
        if let Some(after) = rest.strip_prefix('x') {
            rest = after.trim_start();
        }
    }
    per_axis(intervals, dim, "interval list")
}
