use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ica_lab_cli::catalog;
use ica_lab_cli::{exit_code, load, CliError, Overrides, RunKind};

#[derive(Parser)]
#[command(name = "ica-lab", version, about = "Numerical checks for constrained nonlinear ICA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify a map's Jacobian over a point set.
    Verify(RunArgs),
    /// Build a measure-preserving construction and check it.
    Spurious(RunArgs),
    /// Build the OCT map onto a radial density and check it.
    Prop1(RunArgs),
    /// Test a deformation generator against the OCT constraint system.
    DeformCheck(RunArgs),
    /// Train both arms of the drift experiment.
    TrainDrift(RunArgs),
    /// Print the built-in scenarios.
    List {
        #[arg(long)]
        json: bool,
        #[arg(long, value_parser = parse_kind)]
        kind: Option<RunKind>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_name = "PATH", conflicts_with = "scenario")]
    config: Option<PathBuf>,
    /// Name of a built-in scenario.
    #[arg(long, value_name = "NAME")]
    scenario: Option<String>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Print the report as JSON instead of a summary.
    #[arg(long)]
    json: bool,
}

fn parse_kind(s: &str) -> Result<RunKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown run kind {s:?}"))
}

fn threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("ICA_LAB_THREADS") else { return Ok(()) };
    let n: usize = v.parse().map_err(|_| CliError::Schema(format!("ICA_LAB_THREADS must be a count, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Schema(format!("thread pool: {e}")))
}

fn run(kind: RunKind, a: RunArgs) -> Result<i32, CliError> {
    threads()?;
    let overrides = Overrides { seed: a.seed, out: a.out, tol: a.tol, lambda: a.lambda, steps: a.steps };
    let cfg = load(kind, a.config.as_deref(), a.scenario.as_deref(), &overrides)?;
    let report = ica_lab_cli::run::execute(&cfg)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        for c in &report.checks {
            let value = c.value.map(|v| format!(" {v:.3e}")).unwrap_or_default();
            let bound = c.threshold.map(|v| format!(" (threshold {v:.1e})")).unwrap_or_default();
            println!("{} {}{value}{bound}", if c.pass { "PASS" } else { "FAIL" }, c.name);
        }
        println!("{} in {:.2}s", if report.pass { "all checks passed" } else { "some checks failed" }, report.wall_clock_seconds);
    }
    Ok(exit_code(&report))
}

fn list(json: bool, kind: Option<RunKind>) -> Result<i32, CliError> {
    let entries = catalog::filtered(kind);
    if json {
        println!("{}", serde_json::to_string_pretty(&entries)?);
    } else {
        for e in entries {
            println!("{:<24} {:<13} {}", e.name, e.kind.as_str(), e.description);
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Verify(a) => run(RunKind::Verify, a),
        Command::Spurious(a) => run(RunKind::Spurious, a),
        Command::Prop1(a) => run(RunKind::Prop1, a),
        Command::DeformCheck(a) => run(RunKind::DeformCheck, a),
        Command::TrainDrift(a) => run(RunKind::TrainDrift, a),
        Command::List { json, kind } => list(json, kind),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
