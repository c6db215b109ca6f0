mod commands;
mod data;
mod format;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sphericity::montecarlo::{AlternativeDesign, Scenario};
use sphericity::{SphericityError, TestId};

/// Exit code for malformed input files and command lines.
const EXIT_PARSE: u8 = 64;
/// Exit code for inputs the tests cannot handle (regime, degenerate data).
const EXIT_CONFIG: u8 = 65;

#[derive(Debug)]
pub enum CliError {
    Parse(String),
    Io(io::Error),
    Library(SphericityError),
    /// A check ran to completion and failed; the report is already printed.
    CheckFailed,
}

impl From<SphericityError> for CliError {
    fn from(e: SphericityError) -> Self {
        CliError::Library(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse(_) => EXIT_PARSE,
            CliError::Io(_) | CliError::CheckFailed => 1,
            CliError::Library(SphericityError::Numerical(_) | SphericityError::Accuracy { .. }) => 1,
            CliError::Library(_) => EXIT_CONFIG,
        }
    }
}

#[derive(Parser)]
#[command(name = "sphericity", version, about = "Sphericity tests for high-dimensional covariance matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test a data file for sphericity.
    Test(TestArgs),
    /// Estimate empirical sizes and powers by simulation.
    Simulate(SimulateArgs),
    /// Asymptotic power of CLRT or CJ against a spiked population.
    Power(PowerArgs),
    /// Compare closed-form CLT parameters with contour quadrature.
    VerifyClt(VerifyArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MeanArg {
    Known,
    Unknown,
}

impl MeanArg {
    fn is_known(self) -> bool {
        matches!(self, MeanArg::Known)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum BetaSourceArg {
    True,
    Estimated,
}

#[derive(Clone, Copy, Debug)]
pub enum BetaArg {
    Auto,
    Value(f64),
}

fn parse_beta(s: &str) -> Result<BetaArg, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(BetaArg::Auto);
    }
    s.parse::<f64>()
        .ok()
        .filter(|b| b.is_finite())
        .map(BetaArg::Value)
        .ok_or_else(|| format!("'{s}' is neither a number nor 'auto'"))
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(a) if a > 0.0 && a < 1.0 => Ok(a),
        _ => Err(format!("alpha must be a number in (0, 1), got '{s}'")),
    }
}

fn parse_test(s: &str) -> Result<TestId, String> {
    s.parse().map_err(|e: SphericityError| e.to_string())
}

fn parse_from_str<T: std::str::FromStr<Err = SphericityError>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: SphericityError| e.to_string())
}

#[derive(Args)]
pub struct TestArgs {
    /// CSV file, one observation per row unless --transpose is given.
    pub input: PathBuf,
    /// clrt, cj, lw, bblrt, nagao, john or lrt.
    #[arg(long, value_parser = parse_test)]
    pub test: TestId,
    #[arg(long, default_value = "0.05", value_parser = parse_alpha)]
    pub alpha: f64,
    /// 2 for real data, 1 for complex data.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub kappa: u8,
    /// Fourth-moment offset β, or `auto` to estimate it from the data.
    #[arg(long, default_value = "0", value_parser = parse_beta)]
    pub beta: BetaArg,
    #[arg(long, value_enum, default_value_t = MeanArg::Unknown)]
    pub mean: MeanArg,
    /// Read observations as columns (a p × n file).
    #[arg(long)]
    pub transpose: bool,
    #[arg(long)]
    pub json: bool,
    /// Exit with status 2 when the null hypothesis is rejected.
    #[arg(long)]
    pub exit_on_reject: bool,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Reproduce a whole table (1 to 4).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4),
          conflicts_with_all = ["p", "n", "test", "scenario", "design"])]
    pub table: Option<u8>,
    #[arg(long, required_unless_present = "table")]
    pub p: Option<usize>,
    #[arg(long, required_unless_present = "table")]
    pub n: Option<usize>,
    /// Comma-separated tests.
    #[arg(long, value_delimiter = ',', value_parser = parse_test, required_unless_present = "table")]
    pub test: Vec<TestId>,
    /// normal or gamma.
    #[arg(long, default_value = "normal", value_parser = parse_from_str::<Scenario>)]
    pub scenario: Scenario,
    /// null, half_half, quarter, or spiked:a1:n1,a2:n2,...
    #[arg(long, default_value = "null", value_parser = parse_from_str::<AlternativeDesign>)]
    pub design: AlternativeDesign,
    #[arg(long, default_value_t = 10_000)]
    pub reps: usize,
    #[arg(long, env = "SPHERICITY_SEED", default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value = "0.05", value_parser = parse_alpha)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = MeanArg::Known)]
    pub mean: MeanArg,
    #[arg(long, value_enum, default_value_t = BetaSourceArg::True)]
    pub beta_source: BetaSourceArg,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct PowerArgs {
    /// clrt or cj.
    #[arg(long, value_parser = parse_test)]
    pub test: TestId,
    #[arg(long, default_value = "0.05", value_parser = parse_alpha)]
    pub alpha: f64,
    /// Spikes as a1:n1,a2:n2,... (multiplicity defaults to 1).
    #[arg(long)]
    pub spikes: String,
    /// start:stop:step or a comma list of ratios y = p/n.
    #[arg(long, default_value = "0.05:0.95:0.05")]
    pub y_grid: String,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub kappa: u8,
    #[arg(long, default_value_t = 0.0)]
    pub beta: f64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct VerifyArgs {
    /// start:stop:step or a comma list of ratios.
    #[arg(long, default_value = "0.1,0.25,0.5,0.9")]
    pub y_grid: String,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long)]
    pub json: bool,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

/// Opens `path`, or stdout when no path is given.
pub fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_PARSE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Test(a) => commands::test(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Power(a) => commands::power(&a),
        Command::VerifyClt(a) => commands::verify_clt(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            match &e {
                CliError::Parse(m) => eprintln!("error: {m}"),
                CliError::Io(err) => eprintln!("error: {err}"),
                CliError::Library(err) => eprintln!("error: {err}"),
                CliError::CheckFailed => {}
            }
            ExitCode::from(e.exit_code())
        }
    }
}
