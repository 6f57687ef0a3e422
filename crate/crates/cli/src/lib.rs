//! Batch front end for the `ktrap` library.
//!
//! Exit codes: 0 on success, 1 on runtime errors and failed statistical
//! gates, 2 on malformed arguments or configuration.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod experiment;

use commands::ConditionsInput;
use config::{ExperimentConfig, Model};

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn config(e: ktrap::Error) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn runtime(e: ktrap::Error) -> Self {
        CliError::Runtime(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ktrap",
    version,
    about = "Trap models on k-level trees and their K-process limits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the replica pool.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Coin-tossing walk on a finite tree.
    SimulateCoin(RunArgs),
    /// Poisson-mark construction on a finite tree.
    SimulateMark(RunArgs),
    /// Truncated K-process on the infinite tree.
    SimulateK(RunArgs),
    /// Coin dynamics in sampled heavy-tailed environments.
    GremExperiment(RunArgs),
    /// Condition values em2..em4 of an environment.
    CheckConditions {
        #[arg(long, conflicts_with_all = ["dump", "grem_n"])]
        env: Option<PathBuf>,
        /// Environment dump, binary or CSV.
        #[arg(long, conflicts_with = "grem_n")]
        dump: Option<PathBuf>,
        /// Sample a fine-tuned environment with `M_1 = n`.
        #[arg(long, requires = "alphas")]
        grem_n: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        keep: Option<u64>,
        /// Compare against the coupled limit environment.
        #[arg(long, requires = "grem_n")]
        coupled: bool,
        /// Closed-form limit environment for em2.
        #[arg(long)]
        limit: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        window: u64,
    },
    /// Coin walk against mark construction: chi-square and KS tests.
    Compare {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        volumes: Vec<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        jumps: usize,
        /// Finite environment file instead of seeded random depths.
        #[arg(long)]
        env: Option<PathBuf>,
    },
    /// Skorohod upper bound between two trajectory CSV files.
    Distance {
        left: PathBuf,
        right: PathBuf,
        /// Rank thresholds tried for matched distortions.
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
        grid: Vec<u64>,
    },
    /// Expected leaf clock `E[Θ_k(r)]`.
    ExpectedTheta {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        r: f64,
    },
}

fn run_experiment(args: &RunArgs, model: Model) -> Result<String, CliError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(out) = &args.out {
        cfg.output.dir = Some(out.clone());
    }
    if args.workers == Some(0) {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    let out = experiment::run_experiment(&cfg, model, args.workers)?;
    // With an output directory the summary lives there.
    Ok(if cfg.output.dir.is_some() { String::new() } else { out })
}

fn dispatch(cmd: Command) -> Result<(String, bool), CliError> {
    let ok = |s: String| Ok((s, true));
    match cmd {
        Command::SimulateCoin(a) => ok(run_experiment(&a, Model::Coin)?),
        Command::SimulateMark(a) => ok(run_experiment(&a, Model::Mark)?),
        Command::SimulateK(a) => ok(run_experiment(&a, Model::Kprocess)?),
        Command::GremExperiment(a) => ok(run_experiment(&a, Model::Grem)?),
        Command::CheckConditions {
            env,
            dump,
            grem_n,
            alphas,
            seed,
            keep,
            coupled,
            limit,
            window,
        } => {
            let input = match (&env, &dump, grem_n) {
                (Some(p), _, _) => ConditionsInput::EnvFile(p),
                (_, Some(p), _) => ConditionsInput::Dump(p),
                (_, _, Some(n)) => ConditionsInput::Grem {
                    n,
                    alphas: &alphas,
                    seed,
                    keep,
                    coupled,
                },
                _ => return Err(CliError::Config("give --env, --dump or --grem-n".into())),
            };
            ok(commands::check_conditions(input, limit.as_deref(), window)?)
        }
        Command::Compare {
            k,
            volumes,
            seed,
            jumps,
            env,
        } => {
            if env.is_none() && volumes.is_empty() {
                return Err(CliError::Config("give --volumes or --env".into()));
            }
            let k = k.unwrap_or(volumes.len());
            commands::compare(k, &volumes, seed, jumps, env.as_deref())
        }
        Command::Distance { left, right, grid } => ok(commands::distance(&left, &right, &grid)?),
        Command::ExpectedTheta { env, r } => ok(commands::expected(&env, r)?),
    }
}

/// Runs the command line `argv` (program name first), writing results to
/// `stdout` and diagnostics to `stderr`.
pub fn run_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    0
                }
                _ => 2,
            };
        }
    };
    match dispatch(cli.command) {
        Ok((out, passed)) => {
            let _ = stdout.write_all(out.as_bytes());
            if passed {
                0
            } else {
                let _ = writeln!(stderr, "statistical gate failed (p <= {})", commands::GATE);
                1
            }
        }
        Err(e) => {
            let _ = writeln!(stderr, "{e}");
            e.exit_code()
        }
    }
}

/// [`run_with`] on the process streams.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}
