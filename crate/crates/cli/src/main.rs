use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use lrc_core::analyzer::AnalyzerError;
use lrc_core::codec::CodecError;
use lrc_core::field::FieldError;
use lrc_core::graph::ParseError;
use lrc_core::simstore::{ReplayError, StoreError};
use lrc_core::updatemeter::UcError;
use lrc_core::{BuildError, Method};
use serde::Serialize;

mod commands;
mod manifest;

/// Build, verify and measure locally repairable codes.
#[derive(Debug, Parser, Serialize)]
#[command(name = "lrc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum Command {
    /// Derive optimal parameters for (n, k, r).
    Params(ParamsArgs),
    /// Build a Tanner graph, realize it and write graph.json, matrix.txt.
    Construct(ConstructArgs),
    /// Check a graph and matrix pair.
    Verify(VerifyArgs),
    /// Update complexity statistics.
    Uc(UcArgs),
    /// Compare update complexity of two codes, or sweep a parameter grid.
    Compare(CompareArgs),
    /// Encode, erase, decode and repair stripes.
    #[command(subcommand)]
    Codec(CodecCommand),
    /// Generate and replay storage workloads.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Rerun a command from its manifest and compare outputs.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FieldSpec {
    pub m: u32,
    pub polynomial: Option<u32>,
}

/// `m` or `m:polynomial` (hex with 0x, or decimal).
fn parse_field(s: &str) -> Result<FieldSpec, String> {
    let (m, poly) = match s.split_once(':') {
        Some((m, p)) => (m, Some(p)),
        None => (s, None),
    };
    let m = m
        .trim()
        .parse()
        .map_err(|e| format!("field degree {m:?}: {e}"))?;
    let polynomial = poly
        .map(|p| {
            let p = p.trim();
            match p.strip_prefix("0x") {
                Some(h) => u32::from_str_radix(h, 16),
                None => p.parse(),
            }
            .map_err(|e| format!("polynomial {p:?}: {e}"))
        })
        .transpose()?;
    Ok(FieldSpec { m, polynomial })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Proposed,
    Baseline,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Proposed => Method::Proposed,
            MethodArg::Baseline => Method::Baseline,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ParamsArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub r: usize,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ConstructArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub r: usize,
    #[arg(long, value_enum, default_value = "proposed")]
    pub method: MethodArg,
    /// Field as `m` or `m:polynomial`.
    #[arg(long, env = "LRC_FIELD", default_value = "16", value_parser = parse_field)]
    pub field: FieldSpec,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = lrc_core::builder::DEFAULT_MAX_RETRIES)]
    pub max_retries: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CodeFiles {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub matrix: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub code: CodeFiles,
    /// Also write report.json and a manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct UcArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Use the numeric support of this matrix file instead of the graph's.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    pub x: Vec<usize>,
    /// Enumerate exactly when there are at most this many subsets.
    #[arg(long, default_value_t = lrc_core::updatemeter::DEFAULT_EXACT_BUDGET)]
    pub budget: u128,
    #[arg(long, default_value_t = lrc_core::updatemeter::DEFAULT_SAMPLES)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Method column of the CSV.
    #[arg(long, default_value = "code")]
    pub label: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    /// Graph of the code being assessed.
    #[arg(long, required_unless_present = "sweep")]
    pub a: Option<PathBuf>,
    /// Reference graph.
    #[arg(long, required_unless_present = "sweep")]
    pub b: Option<PathBuf>,
    #[arg(long, default_value = "a")]
    pub label_a: String,
    #[arg(long, default_value = "b")]
    pub label_b: String,
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    pub x: Vec<usize>,
    /// Grid entries `rates=..`, `localities=..`, `n=..` (comma lists).
    #[arg(long, num_args = 0.., conflicts_with_all = ["a", "b"])]
    pub sweep: Option<Vec<String>>,
    #[arg(long, default_value_t = lrc_core::updatemeter::DEFAULT_EXACT_BUDGET)]
    pub budget: u128,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CodecCommand {
    /// Encode a file into a stripe.
    Encode {
        #[command(flatten)]
        code: CodeFiles,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Drop blocks from a stripe.
    Erase {
        #[arg(long)]
        stripe: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        blocks: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover all missing blocks and the original file.
    Decode {
        #[command(flatten)]
        code: CodeFiles,
        #[arg(long)]
        stripe: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild one node's block from its local group.
    Repair {
        #[command(flatten)]
        code: CodeFiles,
        #[arg(long)]
        stripe: PathBuf,
        #[arg(long)]
        node: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    Random,
    /// One update per information index of stripe 0.
    Singles,
    /// One batch update per pair of information indices of stripe 0.
    Pairs,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SimCommand {
    /// Write a trace.jsonl workload.
    Workload(WorkloadArgs),
    /// Replay a trace against a cluster.
    Run(SimRunArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct WorkloadArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub r: usize,
    #[arg(long, value_enum, default_value = "random")]
    pub pattern: Pattern,
    #[arg(long, default_value_t = 1.0)]
    pub update: f64,
    #[arg(long, default_value_t = 0.0)]
    pub batch: f64,
    #[arg(long, default_value_t = 0.0)]
    pub failure: f64,
    #[arg(long, default_value_t = 2)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1)]
    pub stripes: u64,
    #[arg(long, default_value_t = 1)]
    pub rows: usize,
    /// Defaults to d - 1.
    #[arg(long)]
    pub max_failed: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub length: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "LRC_FIELD", default_value = "16", value_parser = parse_field)]
    pub field: FieldSpec,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SimRunArgs {
    /// Code files; required unless resuming with --state.
    #[arg(long, requires = "matrix", required_unless_present = "state")]
    pub graph: Option<PathBuf>,
    #[arg(long, requires = "graph")]
    pub matrix: Option<PathBuf>,
    /// Resume from a saved cluster directory.
    #[arg(long, conflicts_with_all = ["graph", "matrix"])]
    pub state: Option<PathBuf>,
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub stripes: u64,
    #[arg(long, default_value_t = 1)]
    pub rows: usize,
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// An error with a fixed exit status.
#[derive(Debug)]
pub struct Coded {
    pub code: u8,
    pub message: String,
}

impl fmt::Display for Coded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Coded {}

pub const EXIT_VERIFY: u8 = 2;
pub const EXIT_CONSTRUCT: u8 = 3;
pub const EXIT_IO: u8 = 4;

pub fn coded(code: u8, message: impl Into<String>) -> anyhow::Error {
    Coded {
        code,
        message: message.into(),
    }
    .into()
}

fn build_code(e: &BuildError) -> u8 {
    match e {
        BuildError::InvalidParams(_) | BuildError::NotNuOptimal { .. } => EXIT_VERIFY,
        BuildError::InvalidGraph(_) => EXIT_VERIFY,
        _ => EXIT_CONSTRUCT,
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(c) = cause.downcast_ref::<Coded>() {
            return c.code;
        }
        if let Some(b) = cause.downcast_ref::<BuildError>() {
            return build_code(b);
        }
        if let Some(c) = cause.downcast_ref::<CodecError>() {
            return match c {
                CodecError::Build(b) => build_code(b),
                CodecError::Format(_) | CodecError::ShapeMismatch(_) => EXIT_IO,
                _ => EXIT_VERIFY,
            };
        }
        if cause.is::<ReplayError>()
            || cause.is::<AnalyzerError>()
            || cause.is::<FieldError>()
            || cause.is::<UcError>()
        {
            return EXIT_VERIFY;
        }
        if cause.is::<std::io::Error>()
            || cause.is::<serde_json::Error>()
            || cause.is::<ParseError>()
            || cause.is::<StoreError>()
            || cause.is::<csv::Error>()
        {
            return EXIT_IO;
        }
    }
    1
}

/// Parses and runs one command line (without the program name).
pub fn run(args: &[String]) -> Result<()> {
    let cli = Cli::try_parse_from(std::iter::once("lrc".to_string()).chain(args.iter().cloned()))
        .map_err(|e| coded(EXIT_IO, e.to_string()))?;
    dispatch(cli.command, args)
}

fn dispatch(command: Command, args: &[String]) -> Result<()> {
    let config = serde_json::to_value(&command)?;
    match command {
        Command::Params(a) => commands::params(&a),
        Command::Construct(a) => commands::construct(&a, args, config),
        Command::Verify(a) => commands::verify(&a, args, config),
        Command::Uc(a) => commands::uc(&a, args, config),
        Command::Compare(a) => commands::compare(&a, args, config),
        Command::Codec(c) => commands::codec(&c, args, config),
        Command::Sim(SimCommand::Workload(a)) => commands::workload(&a, args, config),
        Command::Sim(SimCommand::Run(a)) => commands::sim_run(&a, args, config),
        Command::Rerun(a) => commands::rerun(&a),
    }
}

fn main() -> ExitCode {
    // die quietly when piped into `head` instead of panicking in println!
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match dispatch(cli.command, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
