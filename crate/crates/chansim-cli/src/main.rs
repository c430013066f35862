//! Command-line front end: reproducible channel simulation, parameter
//! regression, LiDAR scatterer labeling, and ensemble statistics.
//!
//! Exit codes: 0 on success, 2 when flags or configuration fail
//! validation, 3 when input data or produced state is unusable.

mod fit;
mod pointcloud;
mod simulate;
mod stats;

use clap::{Parser, Subcommand};

use chansim::channel::ChannelError;
use chansim::charfit::CharfitError;
use chansim::config::ConfigError;
use chansim::io::IoError;
use chansim::pointcloud::PointCloudError;
use chansim::registry::RegistryError;
use chansim::sim::SimError;
use chansim::stats::StatsError;

#[derive(Parser)]
#[command(name = "chansim", version, about = "Vehicular mmWave channel simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize channel realizations from a run configuration.
    Simulate(simulate::SimulateArgs),
    /// Regress a parameter table from labeled per-density link files.
    Fit(fit::FitArgs),
    /// Label scatterer positions against LiDAR point-cloud frames.
    Pointcloud(pointcloud::PointcloudArgs),
    /// Correlation statistics over an ensemble of simulated realizations.
    Stats(stats::StatsArgs),
}

/// Failures split by exit code: configuration and flag problems exit 2,
/// unusable data files or simulation state exit 3.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Data(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io(io) => CliError::Data(io.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

macro_rules! data_error {
    ($($ty:ty),*) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Data(e.to_string())
            }
        })*
    };
}

data_error!(
    IoError,
    CharfitError,
    PointCloudError,
    StatsError,
    SimError,
    RegistryError,
    ChannelError,
    std::io::Error
);

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate::run(&args),
        Command::Fit(args) => fit::run(&args),
        Command::Pointcloud(args) => pointcloud::run(&args),
        Command::Stats(args) => stats::run(&args),
    };
    match result {
        Ok(()) => {}
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(3);
        }
    }
}
