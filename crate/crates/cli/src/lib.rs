//! Scenario runner behind the `gbmfix` binary.
//!
//! Exit codes: `0` success, `1` failed verification or convergence, `2`
//! configuration error.

pub mod config;
pub mod runner;

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::{ConfigError, Problem, Scenario};
use crate::runner::{RunOptions, SolveReport, TraceRow};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Scenarios shipped with the binary.
pub const BUNDLED: &[(&str, &str)] = &[
    ("example_3_2", include_str!("../scenarios/example_3_2.json")),
    ("example_3_2_no_contraction", include_str!("../scenarios/example_3_2_no_contraction.json")),
    ("remark_3_3", include_str!("../scenarios/remark_3_3.json")),
    ("example_3_6", include_str!("../scenarios/example_3_6.json")),
    ("example_3_6_perturbed", include_str!("../scenarios/example_3_6_perturbed.json")),
    ("stein_demo", include_str!("../scenarios/stein_demo.json")),
    ("stein_random_6", include_str!("../scenarios/stein_random_6.json")),
    ("integral_demo", include_str!("../scenarios/integral_demo.json")),
    ("integral_constant", include_str!("../scenarios/integral_constant.json")),
    ("axioms_grid_p3", include_str!("../scenarios/axioms_grid_p3.json")),
];

/// Scenarios run by `paper-examples`.
pub const PAPER_EXAMPLES: &[&str] = &["example_3_2", "remark_3_3", "example_3_6", "stein_demo", "integral_demo"];

pub fn bundled(name: &str) -> Option<Scenario> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(n, text)| Scenario::from_json(text, n).expect("bundled scenarios parse"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum TraceFormat {
    #[default]
    Csv,
    Jsonl,
}

impl TraceFormat {
    fn extension(self) -> &'static str {
        match self {
            TraceFormat::Csv => "csv",
            TraceFormat::Jsonl => "jsonl",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct OutputOptions {
    pub out: Option<PathBuf>,
    pub format: TraceFormat,
}

/// Renders a trace. Floats use the shortest round-trip representation, so the
/// output is byte-identical across runs.
pub fn render_trace(rows: &[TraceRow], format: TraceFormat) -> String {
    let mut s = String::new();
    match format {
        TraceFormat::Csv => {
            s.push_str("n,step_norm,apriori_bound\n");
            for r in rows {
                let _ = writeln!(s, "{},{:e},{:e}", r.n, r.step_norm, r.apriori_bound);
            }
        }
        TraceFormat::Jsonl => {
            for r in rows {
                let _ = writeln!(s, "{}", serde_json::to_string(r).expect("trace rows serialize"));
            }
        }
    }
    s
}

fn to_pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize")
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), ConfigError> {
    std::fs::create_dir_all(dir)
        .and_then(|()| std::fs::write(dir.join(name), contents))
        .map_err(|source| ConfigError::Io {
            path: dir.join(name).display().to_string(),
            source,
        })
}

fn config_failure(err: &ConfigError, stderr: &mut dyn Write) -> i32 {
    let _ = writeln!(stderr, "error: {err}");
    EXIT_CONFIG
}

pub fn cmd_verify(path: &Path, opts: &RunOptions, out: &OutputOptions, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let mut run = || -> Result<bool, ConfigError> {
        let scenario = Scenario::load(path)?;
        let report = runner::verify(&scenario, opts)?;
        let text = to_pretty(&report);
        if let Some(dir) = &out.out {
            write_file(dir, &format!("{}.verify.json", scenario.name), &text)?;
        }
        let _ = writeln!(stdout, "{text}");
        Ok(report.passed)
    };
    match run() {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_FAILURE,
        Err(e) => config_failure(&e, stderr),
    }
}

fn write_solve_outputs(report: &SolveReport, out: &OutputOptions) -> Result<(), ConfigError> {
    let Some(dir) = &out.out else { return Ok(()) };
    let name = &report.scenario;
    write_file(dir, &format!("{name}.summary.json"), &to_pretty(report))?;
    let ext = out.format.extension();
    if report.seeds.is_empty() {
        if !report.trace.is_empty() {
            write_file(dir, &format!("{name}.trace.{ext}"), &render_trace(&report.trace, out.format))?;
        }
    } else {
        for (k, s) in report.seeds.iter().enumerate() {
            write_file(dir, &format!("{name}.seed{k}.trace.{ext}"), &render_trace(&s.trace, out.format))?;
        }
    }
    Ok(())
}

pub fn cmd_solve(path: &Path, opts: &RunOptions, out: &OutputOptions, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let mut run = || -> Result<bool, ConfigError> {
        let scenario = Scenario::load(path)?;
        let report = runner::solve(&scenario, opts)?;
        write_solve_outputs(&report, out)?;
        let _ = writeln!(stdout, "{}", to_pretty(&report));
        if let Some(e) = &report.error {
            let _ = writeln!(stderr, "{}: {e}", report.scenario);
        }
        Ok(report.passed)
    };
    match run() {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_FAILURE,
        Err(e) => config_failure(&e, stderr),
    }
}

/// Runs the bundled worked-example scenarios (or same-named files from `dir`) and
/// checks each against its expectations.
pub fn cmd_paper_examples(
    dir: Option<&Path>,
    opts: &RunOptions,
    out: &OutputOptions,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32 {
    let mut scenarios = Vec::new();
    for name in PAPER_EXAMPLES {
        let loaded = match dir {
            Some(d) => Scenario::load(&d.join(format!("{name}.json"))),
            None => Ok(bundled(name).expect("worked example is bundled")),
        };
        match loaded {
            Ok(s) => scenarios.push(s),
            Err(e) => return config_failure(&e, stderr),
        }
    }
    let mut all_passed = true;
    for scenario in &scenarios {
        let outcome = match runner::check(scenario, opts) {
            Ok(o) => o,
            Err(e) => return config_failure(&e, stderr),
        };
        if out.out.is_some() && !matches!(scenario.problem, Problem::Axioms(_)) {
            match runner::solve(scenario, opts).and_then(|r| write_solve_outputs(&r, out)) {
                Ok(()) => {}
                Err(e) => return config_failure(&e, stderr),
            }
        }
        if outcome.passed {
            let _ = writeln!(stdout, "PASS {}", outcome.scenario);
        } else {
            all_passed = false;
            let _ = writeln!(stdout, "FAIL {}: {}", outcome.scenario, outcome.failures.join("; "));
        }
    }
    if all_passed {
        EXIT_OK
    } else {
        EXIT_FAILURE
    }
}

#[derive(Debug, Serialize)]
struct OracleReport {
    kind: String,
    solution: Value,
    /// Max-abs difference from the iterative solver, if it converged.
    iterative_delta: Option<f64>,
    residual: f64,
}

/// Accepts either a full scenario of kind `stein`/`integral` or the bare
/// `problem` object.
fn load_problem(path: &Path) -> Result<Problem, ConfigError> {
    let text = config::read(path)?;
    let origin = path.display().to_string();
    let value: Value = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
        path: origin.clone(),
        source,
    })?;
    if value.get("schema").is_some() {
        Ok(Scenario::from_json(&text, &origin)?.problem)
    } else {
        serde_json::from_value(value).map_err(|source| ConfigError::Parse { path: origin, source })
    }
}

pub fn cmd_oracle(path: &Path, opts: &RunOptions, out: &OutputOptions, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    use gbmfix::applications::{integral_oracle, integral_solve, stein_iterate, stein_oracle};

    let run = || -> Result<Result<OracleReport, String>, ConfigError> {
        let problem = load_problem(path)?;
        let tol = opts.tol.unwrap_or(1e-12);
        let max_iter = opts.max_iter.unwrap_or(10_000);
        Ok(match &problem {
            Problem::Stein(cfg) => {
                let p = runner::stein_problem(cfg, opts)?;
                stein_oracle(&p).map_err(|e| e.to_string()).map(|x| OracleReport {
                    kind: "stein".into(),
                    iterative_delta: stein_iterate(&p, None, tol, max_iter)
                        .ok()
                        .and_then(|s| s.x.max_abs_diff(&x).ok()),
                    residual: p.residual(&x),
                    solution: serde_json::to_value(&x).expect("serializable"),
                })
            }
            Problem::Integral(cfg) => {
                let p = runner::integral_problem(cfg)?;
                integral_oracle(&p).map_err(|e| e.to_string()).map(|x| OracleReport {
                    kind: "integral".into(),
                    iterative_delta: integral_solve(&p, None, tol, max_iter).ok().map(|s| {
                        s.x.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
                    }),
                    residual: p.residual(&x),
                    solution: serde_json::to_value(&x).expect("serializable"),
                })
            }
            other => {
                return Err(ConfigError::invalid(format!(
                    "oracle needs a stein or integral problem, got {}",
                    other.kind()
                )))
            }
        })
    };
    match run() {
        Ok(Ok(report)) => {
            let text = to_pretty(&report);
            if let Some(dir) = &out.out {
                if let Err(e) = write_file(dir, &format!("oracle.{}.json", report.kind), &text) {
                    return config_failure(&e, stderr);
                }
            }
            let _ = writeln!(stdout, "{text}");
            EXIT_OK
        }
        Ok(Err(msg)) => {
            let _ = writeln!(stderr, "oracle failed: {msg}");
            EXIT_FAILURE
        }
        Err(e) => config_failure(&e, stderr),
    }
}
