//! `doacal` command-line front end.
//!
//! Exit codes: 0 on success, 2 for usage or configuration errors, 1 for
//! runtime failures.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use doacal_core::estimators::EstimatorRegistry;
use doacal_core::harness::{
    format_summary_table, parse_list, write_detail_file, write_summary_file, Experiment,
    ExperimentConfig, ExperimentRunner,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "doacal", version, about = "DOA estimation with array calibration: Monte Carlo sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an SNR sweep and write detail and summary CSVs.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExperimentArg {
    GainPhase,
    Mutual,
    None,
}

impl From<ExperimentArg> for Experiment {
    fn from(e: ExperimentArg) -> Self {
        match e {
            ExperimentArg::GainPhase => Experiment::GainPhase,
            ExperimentArg::Mutual => Experiment::MutualCoupling,
            ExperimentArg::None => Experiment::None,
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    experiment: ExperimentArg,
    /// Comma-separated SNR values in dB.
    #[arg(long, allow_hyphen_values = true)]
    snr_list: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    snapshots: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dictionary grid step in degrees; must divide 180.
    #[arg(long)]
    grid_step: Option<f64>,
    /// Comma-separated algorithm ids.
    #[arg(long)]
    algorithms: Option<String>,
    /// Maximum number of trials run concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

/// A fully resolved `simulate` invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulateCommand {
    pub config: ExperimentConfig,
    pub jobs: usize,
    pub detail_path: PathBuf,
    pub summary_path: PathBuf,
    pub print_config: bool,
}

#[derive(Debug)]
pub enum CliError {
    /// Help or version output requested; not an error for the exit code.
    Display(String),
    Usage(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Display(s) | CliError::Usage(s) => f.write_str(s),
        }
    }
}

/// Merges the experiment defaults with the flags and validates the result.
pub fn parse_cli<I, T>(argv: I, registry: &EstimatorRegistry) -> Result<SimulateCommand, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            CliError::Display(e.to_string())
        }
        _ => CliError::Usage(e.to_string()),
    })?;
    let Command::Simulate(args) = cli.command;
    let usage = |e: doacal_core::Error| CliError::Usage(e.to_string());

    let experiment: Experiment = args.experiment.into();
    let mut config = ExperimentConfig::defaults(experiment);
    if let Some(list) = &args.snr_list {
        config.snr_list_db = parse_list("snr-list", list).map_err(usage)?;
    }
    if let Some(t) = args.trials {
        config.trials = t;
    }
    if let Some(t) = args.snapshots {
        config.num_snapshots = t;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(g) = args.grid_step {
        config.grid_step_deg = g;
    }
    if let Some(a) = &args.algorithms {
        config.set("algorithms", a).map_err(usage)?;
    }
    config.validate(registry).map_err(usage)?;
    if args.jobs == 0 {
        return Err(CliError::Usage("--jobs must be >= 1".into()));
    }
    let stem = experiment.as_str();
    Ok(SimulateCommand {
        config,
        jobs: args.jobs,
        detail_path: args.out.unwrap_or_else(|| PathBuf::from(format!("{stem}_detail.csv"))),
        summary_path: args.summary.unwrap_or_else(|| PathBuf::from(format!("{stem}_summary.csv"))),
        print_config: args.print_config,
    })
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let registry = EstimatorRegistry::with_builtins();
    let command = match parse_cli(argv, &registry) {
        Ok(c) => c,
        Err(CliError::Display(s)) => {
            print!("{s}");
            return EXIT_OK;
        }
        Err(CliError::Usage(s)) => {
            eprintln!("error: {}", s.trim_start_matches("error: ").trim_end());
            return EXIT_USAGE;
        }
    };
    if command.print_config {
        print!("{}", command.config.render());
        return EXIT_OK;
    }
    match execute(&command, &registry) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn execute(command: &SimulateCommand, registry: &EstimatorRegistry) -> doacal_core::Result<()> {
    let runner = ExperimentRunner::new(command.config.clone(), registry)?;
    let output = runner.run(command.jobs)?;
    write_detail_file(&command.detail_path, &output.rows)?;
    write_summary_file(&command.summary_path, &output.summary)?;
    println!(
        "experiment {} ({} trials per SNR), mean RMSE in degrees:",
        command.config.experiment.as_str(),
        command.config.trials
    );
    print!("{}", format_summary_table(&output.summary));
    Ok(())
}
