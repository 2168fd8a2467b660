//! Command-line front end.
//!
//! ```text
//! fbsde run --problem sin1d --scheme cn --steps 17 [--gh-order 8] …
//! fbsde converge --problem sin1d --scheme cn --steps 9,17,33,65 --out report.csv
//! ```
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver error,
//! 4 rate undefined (every study row at the rounding floor).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::FbsdeError;
use crate::harness::{
    run_convergence, run_single, ExperimentConfig, ReportFormat, SchemeSpec,
};

#[derive(Parser)]
#[command(
    name = "fbsde",
    about = "Crank-Nicolson and theta-scheme solvers for decoupled FBSDEs",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem once and print Y0, Z0, exact values and errors
    Run(RunArgs),
    /// Run a convergence study over several step counts and fit rates
    Converge(ConvergeArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Registry name of the problem (sin1d, atan1d, const1d, linear1d)
    #[arg(long)]
    problem: String,
    /// Scheme preset: cn | euler | theta
    #[arg(long, default_value = "cn")]
    scheme: String,
    /// Explicit theta parameters "t1,t2,t3,t4" (required for --scheme theta)
    #[arg(long)]
    theta: Option<String>,
    /// Gauss-Hermite quadrature order
    #[arg(long, default_value_t = 8)]
    gh_order: usize,
    /// Override the node count per dimension chosen by the grid builder
    #[arg(long)]
    grid_nodes: Option<usize>,
    /// Safety factor k in the grid radius k·σ̄·√T + |b̄|·T
    #[arg(long, default_value_t = 8.0)]
    grid_radius_k: f64,
    /// Local Lagrange interpolation degree
    #[arg(long, default_value_t = 6)]
    lagrange_degree: usize,
    /// Picard stopping tolerance
    #[arg(long, default_value_t = 1e-12)]
    picard_tol: f64,
    /// Picard iteration cap
    #[arg(long, default_value_t = 50)]
    picard_maxit: usize,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Time step count N
    #[arg(long)]
    steps: usize,
}

#[derive(Args)]
struct ConvergeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated step counts, strictly increasing (e.g. 9,17,33,65)
    #[arg(long)]
    steps: String,
    /// Write the report as CSV to this path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format printed to stdout: csv | table
    #[arg(long, default_value = "table")]
    format: String,
}

fn parse_scheme(scheme: &str, theta: &Option<String>) -> Result<SchemeSpec, FbsdeError> {
    match scheme {
        "cn" => Ok(SchemeSpec::CrankNicolson),
        "euler" => Ok(SchemeSpec::ImplicitEuler),
        "theta" => {
            let spec = theta.as_ref().ok_or_else(|| {
                FbsdeError::Config("--scheme theta requires --theta t1,t2,t3,t4".into())
            })?;
            let parts: Vec<&str> = spec.split(',').collect();
            if parts.len() != 4 {
                return Err(FbsdeError::Config(format!(
                    "--theta expects four comma-separated values, got {spec:?}"
                )));
            }
            let mut vals = [0.0f64; 4];
            for (v, p) in vals.iter_mut().zip(&parts) {
                *v = p
                    .trim()
                    .parse()
                    .map_err(|e| FbsdeError::Config(format!("bad theta value {p:?}: {e}")))?;
            }
            Ok(SchemeSpec::Theta(vals))
        }
        other => Err(FbsdeError::Config(format!(
            "unknown scheme {other:?}; expected cn, euler or theta"
        ))),
    }
}

fn build_config(common: &CommonArgs, steps: Vec<usize>) -> Result<ExperimentConfig, FbsdeError> {
    let scheme = parse_scheme(&common.scheme, &common.theta)?;
    let mut config = ExperimentConfig::new(&common.problem, scheme, steps);
    config.gh_order = common.gh_order;
    config.grid_nodes = common.grid_nodes;
    config.grid_radius_k = common.grid_radius_k;
    config.lagrange_degree = common.lagrange_degree;
    config.picard_tol = common.picard_tol;
    config.picard_max = common.picard_maxit;
    Ok(config)
}

fn exit_code_for(err: &FbsdeError) -> i32 {
    match err {
        FbsdeError::Config(_) | FbsdeError::QuadOrderOutOfRange(_) => 2,
        FbsdeError::RateUndefined(_) => 4,
        _ => 3,
    }
}

fn run(cli: Cli) -> Result<(), FbsdeError> {
    match cli.command {
        Command::Run(args) => {
            let config = build_config(&args.common, vec![args.steps])?;
            let summary = run_single(&config)?;
            println!("{summary}");
            Ok(())
        }
        Command::Converge(args) => {
            let steps = args
                .steps
                .split(',')
                .map(|s| {
                    s.trim().parse::<usize>().map_err(|e| {
                        FbsdeError::Config(format!("bad step count {s:?}: {e}"))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut config = build_config(&args.common, steps)?;
            config.out_path = args.out.clone();
            config.format = match args.format.as_str() {
                "csv" => ReportFormat::Csv,
                "table" => ReportFormat::Table,
                other => {
                    return Err(FbsdeError::Config(format!(
                        "unknown format {other:?}; expected csv or table"
                    )))
                }
            };
            let report = run_convergence(&config)?;
            match config.format {
                ReportFormat::Csv => print!("{}", report.to_csv()),
                ReportFormat::Table => print!("{}", report.format_table()),
            }
            Ok(())
        }
    }
}

/// CLI entry point; returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}
