//! The `rlab` command line: argument parsing, report envelopes and exit codes.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration or usage
//! error, 3 infeasible (support cap, horizon or calibration budget exceeded).

mod commands;
pub mod report;
pub mod verify;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use report::{CommandName, Envelope, ExperimentManifest, Table, TOOL_VERSION};

pub const SUPPORT_CAP_VAR: &str = "RLAB_SUPPORT_CAP";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(rlab_core::Error),
    /// The command ran but a checked property did not hold.
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_infeasible() => 3,
            CliError::Core(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error: {m}"),
            CliError::Core(e) => write!(f, "error: {e}"),
            CliError::Failed(m) => write!(f, "verification failed: {m}"),
        }
    }
}

impl From<rlab_core::Error> for CliError {
    fn from(e: rlab_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(format!("invalid JSON: {e}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "rlab", version, about = "Exact and Monte Carlo laboratory for Rademacher random walks")]
pub struct Cli {
    /// Output file (written atomically); standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for Monte Carlo and verification.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for randomised commands.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Exact rational arithmetic where available.
    #[arg(long, global = true)]
    pub exact: bool,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a step sequence from a JSON spec.
    Gen(commands::GenArgs),
    /// Exact law of X_n, on the integers or modulo m.
    Dist(commands::DistArgs),
    /// Evaluate a closed-form bound, optionally against the exact quantity.
    Bounds(commands::BoundsArgs),
    /// Run a Monte Carlo manifest.
    Mc(commands::McArgs),
    /// Log-log fit of concentration values.
    Fit(commands::FitArgs),
    /// Run a verification suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub suite: verify::Suite,
    /// Largest walk length (suite-specific default).
    #[arg(long)]
    pub max_n: Option<u64>,
    /// Random cases per parameter point (suite-specific default).
    #[arg(long)]
    pub cases: Option<u64>,
    /// Largest modulus for the modular suite.
    #[arg(long)]
    pub max_m: Option<u64>,
}

/// What a command produced, before formatting.
pub struct Output {
    pub report: Value,
    pub table: Table,
    /// Preferred rendering when no `--format` is given.
    pub text: Option<String>,
    pub failure: Option<String>,
}

pub struct Ctx {
    pub seed: Option<u64>,
    pub exact: bool,
    pub support_cap: usize,
    pub inputs: BTreeMap<String, Value>,
}

/// Runs `rlab` with explicit arguments and environment.
pub fn run_with<I, T>(argv: I, env: &BTreeMap<String, String>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli, args, env, stdout) {
        Ok(None) => 0,
        Ok(Some(failure)) => {
            let _ = writeln!(stderr, "{}", CliError::Failed(failure));
            1
        }
        Err(e) => {
            let _ = writeln!(stderr, "{e}");
            e.exit_code()
        }
    }
}

/// Runs `rlab` against the process arguments and environment.
pub fn run() -> i32 {
    let env: BTreeMap<String, String> = std::env::vars().collect();
    run_with(std::env::args_os(), &env, &mut std::io::stdout(), &mut std::io::stderr())
}

fn support_cap(env: &BTreeMap<String, String>) -> Result<usize, CliError> {
    match env.get(SUPPORT_CAP_VAR) {
        None => Ok(rlab_core::exactdist::DEFAULT_SUPPORT_CAP),
        Some(s) => match s.trim().parse::<usize>() {
            Ok(c) if c > 0 => Ok(c),
            _ => Err(CliError::Usage(format!("{SUPPORT_CAP_VAR} must be a positive integer, got {s:?}"))),
        },
    }
}

fn execute(
    cli: Cli,
    args: Vec<String>,
    env: &BTreeMap<String, String>,
    stdout: &mut dyn Write,
) -> Result<Option<String>, CliError> {
    let mut ctx = Ctx {
        seed: cli.seed,
        exact: cli.exact,
        support_cap: support_cap(env)?,
        inputs: BTreeMap::from([("argv".to_string(), Value::from(args))]),
    };
    let created_at = report::timestamp(env)?;
    let (name, output) = with_threads(cli.threads, || -> Result<_, CliError> {
        Ok(match &cli.command {
            Command::Gen(a) => (CommandName::Gen, commands::gen(a, &mut ctx)?),
            Command::Dist(a) => (CommandName::Dist, commands::dist(a, &mut ctx)?),
            Command::Bounds(a) => (CommandName::Bounds, commands::bounds(a, &mut ctx)?),
            Command::Mc(a) => (CommandName::Mc, commands::mc(a, &mut ctx)?),
            Command::Fit(a) => (CommandName::Fit, commands::fit(a, &mut ctx)?),
            Command::Verify(a) => (CommandName::Verify, verify::run_suite(a, &mut ctx)?),
        })
    })??;

    let manifest = ExperimentManifest {
        command: name,
        inputs: ctx.inputs,
        output_path: cli.out.as_ref().map(|p| p.display().to_string()),
        created_at,
        tool_version: TOOL_VERSION.to_string(),
    };
    let bytes = match (cli.format, &output.text) {
        (Some(Format::Csv), _) => output.table.to_csv(),
        (None, Some(text)) => text.clone(),
        _ => {
            let env = Envelope {
                manifest: &manifest,
                generator_version: rlab_core::rng::GENERATOR_VERSION,
                report: &output.report,
            };
            let mut s = serde_json::to_string_pretty(&env)?;
            s.push('\n');
            s
        }
    };
    match &cli.out {
        Some(path) => report::write_atomic(path, bytes.as_bytes())?,
        None => stdout.write_all(bytes.as_bytes())?,
    }
    Ok(output.failure)
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(CliError::Usage("--threads must be positive".into())),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}
