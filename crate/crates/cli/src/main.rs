//! `plcrca`: simulate PLC logs, analyze root causes, evaluate and plot.
//!
//! Exit codes: 0 ok, 1 usage, 2 data error, 3 internal.

mod commands;
mod error;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use plcrca_core::ensemble::ModelKind;
use plcrca_core::sim::Preset;

use commands::{AnalyzeArgs, ReportFormat, SimulateArgs};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "plcrca", version, about = "Root-cause analysis for cyclic binary PLC logs")]
struct Cli {
    /// JSON config file; `PLCRCA_*` variables and flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Parent of the per-run output directories.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic log with ground truth.
    Simulate {
        #[arg(long)]
        preset: Option<Preset>,
        #[arg(long)]
        anomaly_rate: Option<f64>,
        #[arg(long)]
        cycles: Option<usize>,
    },
    /// Run one model over a log (`-` reads stdin).
    Analyze {
        input: PathBuf,
        #[arg(long, default_value = "ensemble")]
        model: ModelKind,
        /// Flag cycles above factor × this duration instead of median + 3·MAD.
        #[arg(long)]
        ideal_cycle_seconds: Option<f64>,
        /// JSON list of `{cycle, flag}` records; a ground-truth file works too.
        #[arg(long, conflicts_with = "ideal_cycle_seconds")]
        labels: Option<PathBuf>,
        /// Worker threads for per-cycle scoring; 0 picks automatically.
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Input is tab-separated.
        #[arg(long)]
        tsv: bool,
    },
    /// Score reports against ground truth.
    Evaluate {
        #[arg(long)]
        reports: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Export the score scatter.
    Report {
        #[arg(long)]
        reports: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        format: ReportFormat,
    },
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    let mut config = settings::load(cli.config.as_deref(), std::env::vars())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    match cli.command {
        Command::Simulate {
            preset,
            anomaly_rate,
            cycles,
        } => commands::simulate(
            config,
            SimulateArgs {
                preset,
                anomaly_rate,
                cycles,
            },
            &cli.out,
        ),
        Command::Analyze {
            input,
            model,
            ideal_cycle_seconds,
            labels,
            threads,
            tsv,
        } => {
            if ideal_cycle_seconds.is_some() {
                config.flag.ideal_cycle_seconds = ideal_cycle_seconds;
            }
            commands::analyze(
                config,
                AnalyzeArgs {
                    input,
                    model,
                    labels,
                    threads,
                    tsv,
                },
                &cli.out,
            )
        }
        Command::Evaluate { reports, truth } => commands::evaluate(config, &reports, &truth, &cli.out),
        Command::Report { reports, format } => commands::report(config, &reports, format, &cli.out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(dir) => {
            // last stdout line is always the run directory
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
