//! `ccm`: estimate, diagnose and simulate comparative causal mediation.

mod diagnose;
mod estimate;
mod output;
mod simulate;

use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;

use ccm::data::{load_dataset, ColumnMapping, Dataset};
use ccm::CcmError;
use clap::{Args, Parser, Subcommand, ValueEnum};

use output::Format;

/// Input error: unreadable file, bad flags or configuration, schema problems.
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_GATE: u8 = 3;
pub const EXIT_SINGULAR: u8 = 4;

#[derive(Parser)]
#[command(name = "ccm", version, about = "Comparative causal mediation for three-arm experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test interactions, gate the denominators, estimate and classify.
    Estimate(estimate::EstimateArgs),
    /// Run a Monte Carlo study and write its summary and replicate table.
    Simulate(simulate::SimulateArgs),
    /// Run the assumption checks without producing estimates.
    Diagnose(diagnose::DiagnoseArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Delimiter {
    Comma,
    Tab,
}

impl Delimiter {
    fn byte(self) -> u8 {
        match self {
            Delimiter::Comma => b',',
            Delimiter::Tab => b'\t',
        }
    }
}

/// Input file and column roles, shared by `estimate` and `diagnose`.
#[derive(Args, Debug, Clone, serde::Serialize)]
pub struct DataArgs {
    /// Delimited text file with a header row.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "t1")]
    pub t1: String,
    #[arg(long, default_value = "t2")]
    pub t2: String,
    #[arg(long, default_value = "m")]
    pub m: String,
    #[arg(long, default_value = "y")]
    pub y: String,
    #[arg(long, value_enum, default_value_t = Delimiter::Comma)]
    pub delimiter: Delimiter,
}

impl DataArgs {
    pub fn load(&self) -> Result<Dataset, Failure> {
        let file = File::open(&self.input).map_err(|e| {
            Failure::input(format!("cannot open {}: {e}", self.input.display()))
        })?;
        let schema = ColumnMapping {
            t1: self.t1.clone(),
            t2: self.t2.clone(),
            m: self.m.clone(),
            y: self.y.clone(),
        };
        load_dataset(file, &schema, self.delimiter.byte()).map_err(Failure::from)
    }
}

/// A run that did not produce a complete report.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<CcmError> for Failure {
    fn from(e: CcmError) -> Self {
        let code = match &e {
            CcmError::Singular { .. } => EXIT_SINGULAR,
            CcmError::GateFailed(_) | CcmError::DegenerateEstimand(_) => EXIT_GATE,
            CcmError::MissingColumn { .. }
            | CcmError::Parse { .. }
            | CcmError::Exclusivity { .. }
            | CcmError::Input(_)
            | CcmError::InvalidArgument(_) => EXIT_INPUT,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

/// The given seed, or a fresh one from system entropy announced on stderr.
pub fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s: u64 = rand::random();
        eprintln!("seed: {s}");
        s
    })
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("CCM_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::input(format!("CCM_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::input(format!("cannot configure {n} threads: {e}")))
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::Estimate(a) => estimate::run(&a),
        Command::Simulate(a) => simulate::run(&a),
        Command::Diagnose(a) => diagnose::run(&a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Writes `value` to stdout in the requested format.
pub fn emit<T: serde::Serialize>(value: &T, format: Format) -> Result<(), Failure> {
    let text = output::render(value, format).map_err(|e| Failure {
        code: 1,
        message: format!("cannot serialize report: {e}"),
    })?;
    println!("{text}");
    Ok(())
}
