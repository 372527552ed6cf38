use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;
use uq_core::config::{PipelineConfig, CONFIG_SCHEMA};
use uq_core::pipeline::Pipeline;
use uq_core::Error;

/// Surrogate modeling, sensitivity analysis and Bayesian calibration of
/// time-series simulators, driven by one JSON config file.
#[derive(Parser, Debug)]
#[command(name = "uq", version, about)]
struct Cli {
    /// Pipeline configuration (JSON; see `uq schema`).
    #[arg(short, long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Directory holding all artifacts; overrides `paths.workdir`.
    #[arg(long, global = true, env = "UQ_WORKDIR", value_name = "DIR")]
    workdir: Option<PathBuf>,

    /// Maximum number of worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Latin hypercube design -> design.csv.
    Design,
    /// Simulator runs at the design -> outputs.csv, times.csv.
    Simulate,
    /// PCA + sparse PCE surrogate -> surrogate.json, fit_report.csv,
    /// fit_components.csv, pca_scores.csv, validation.csv.
    Fit,
    /// Surrogate traces -> predictions.csv.
    Predict {
        /// CSV of input points with the input names as header; the centre
        /// of the input box when omitted.
        #[arg(long, value_name = "FILE")]
        points: Option<PathBuf>,
    },
    /// Sobol indices of the component expansions -> sobol.csv.
    Sobol {
        /// Also write time-variant first-order indices -> sobol_t.csv.
        #[arg(long)]
        time_variant: bool,
    },
    /// Random-walk Metropolis on the surrogate -> observations.csv,
    /// chains.json.
    Calibrate,
    /// Posterior mode -> map.json.
    Map,
    /// Posterior summaries -> posterior_summary.csv, posterior_kde.csv,
    /// map_prediction.csv, posterior_predictive.csv.
    Summarize,
    /// Every stage from design to summarize.
    Run,
    /// Print the JSON schema of the configuration file.
    Schema,
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Command::Schema = cli.command {
        print!("{CONFIG_SCHEMA}");
        return Ok(());
    }
    let path = cli
        .config
        .ok_or_else(|| Error::Config("no configuration file given; pass -c FILE".into()))?;
    let cfg = PipelineConfig::load(&path)?;
    let mut pipeline = Pipeline::new(cfg)?;
    if let Some(dir) = cli.workdir {
        pipeline = pipeline.with_workdir(dir);
    }
    match cli.command {
        Command::Design => pipeline.design().map(drop),
        Command::Simulate => pipeline.simulate().map(drop),
        Command::Fit => pipeline.fit().map(drop),
        Command::Predict { points } => pipeline.predict(points.as_deref()).map(drop),
        Command::Sobol { time_variant } => pipeline.sobol(time_variant).map(drop),
        Command::Calibrate => pipeline.calibrate().map(drop),
        Command::Map => pipeline.map().map(drop),
        Command::Summarize => pipeline.summarize().map(drop),
        Command::Run => pipeline.run_all(),
        Command::Schema => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_millis()
        .init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            error!("cannot configure the thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
