use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gbmfix_cli::runner::RunOptions;
use gbmfix_cli::{OutputOptions, TraceFormat};

/// Fixed points of graph contractions on matrix-valued b-metric spaces.
#[derive(Parser, Debug)]
#[command(name = "gbmfix", version, about)]
struct Cli {
    /// Stopping tolerance, overriding the scenario.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Iteration cap, overriding the scenario.
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    /// Seed for all sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for reports and traces.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Trace file format.
    #[arg(long, global = true, value_enum, default_value_t = TraceFormat::Csv)]
    format: TraceFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the b-metric axioms and the contraction certificate.
    Verify { scenario: PathBuf },
    /// Verify, then iterate to a point of coincidence or fixed point.
    Solve { scenario: PathBuf },
    /// Run the bundled worked examples and check their expected outcomes.
    PaperExamples {
        /// Load the scenarios from this directory instead.
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Solve a Stein or integral problem directly by linear algebra.
    Oracle { problem: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = RunOptions {
        tol: cli.tol,
        max_iter: cli.max_iter,
        seed: cli.seed,
    };
    let out = OutputOptions {
        out: cli.out,
        format: cli.format,
    };
    let (mut stdout, mut stderr) = (io::stdout().lock(), io::stderr().lock());
    let code = match &cli.command {
        Command::Verify { scenario } => gbmfix_cli::cmd_verify(scenario, &opts, &out, &mut stdout, &mut stderr),
        Command::Solve { scenario } => gbmfix_cli::cmd_solve(scenario, &opts, &out, &mut stdout, &mut stderr),
        Command::PaperExamples { dir } => {
            gbmfix_cli::cmd_paper_examples(dir.as_deref(), &opts, &out, &mut stdout, &mut stderr)
        }
        Command::Oracle { problem } => gbmfix_cli::cmd_oracle(problem, &opts, &out, &mut stdout, &mut stderr),
    };
    ExitCode::from(code as u8)
}
