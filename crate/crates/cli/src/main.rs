use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

mod commands;
mod config;
mod manifest;

use fanova_core::Error;

#[derive(Debug, Parser)]
#[command(name = "fanova", version, about = "Spatial functional ANOVA with SPDE latent fields")]
struct Cli {
    /// Worker threads for parallel sections.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a structured grid mesh and export it as CSV.
    Mesh(commands::MeshArgs),
    /// Fit the two-step FANOVA model to a 2×2 ensemble.
    Fit(commands::FitArgs),
    /// Run the IND / STAT / NSTAT simulation study.
    Simstudy(commands::SimstudyArgs),
    /// Shear estimation, extrapolation, power and farm energy.
    Wind(commands::WindArgs),
    /// Collate result CSVs under a directory into one table.
    Report(commands::ReportArgs),
}

/// Process exit codes.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 4,
        Error::Csv(c) if c.is_io_error() => 4,
        e if e.is_numerical() => 3,
        _ => 2,
    }
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: ErrorBody<'a>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
    exit_code: u8,
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Argument(_) => "argument",
        Error::Dimension(_) => "dimension",
        Error::Assembly(_) => "assembly",
        Error::Location { .. } => "location",
        Error::NotPositiveDefinite { .. } => "not_positive_definite",
        Error::Convergence { .. } => "convergence",
        Error::Optimization(_) => "optimization",
        Error::Design(_) => "design",
        Error::InsufficientData(_) => "insufficient_data",
        Error::Io(_) => "io",
        Error::Csv(_) => "csv",
        Error::Json(_) => "json",
        Error::Parse(_) => "parse",
    }
}

/// Output directory, overridable through `FANOVA_OUT_DIR`.
pub(crate) fn output_dir(configured: &Path) -> PathBuf {
    std::env::var_os("FANOVA_OUT_DIR").map(PathBuf::from).unwrap_or_else(|| configured.to_path_buf())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.max(1);
    let result = match cli.command {
        Command::Mesh(a) => commands::mesh(a),
        Command::Fit(a) => commands::fit(a, threads),
        Command::Simstudy(a) => commands::simstudy(a, threads),
        Command::Wind(a) => commands::wind(a, threads),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            let report = ErrorReport { error: ErrorBody { kind: error_kind(&e), message: e.to_string(), exit_code: code } };
            eprintln!("{}", serde_json::to_string(&report).unwrap_or_else(|_| format!("{{\"error\":{{\"message\":\"{e}\"}}}}")));
            ExitCode::from(code)
        }
    }
}
