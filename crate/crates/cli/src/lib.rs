//! Command-line front end: config-driven fits, simulation, comparison and
//! posterior mean profiles.

pub mod commands;
pub mod config;
pub mod error;
pub mod load;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{FitConfig, Overrides, SimConfig};
use error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "areal-sir", version, about = "Spatio-temporal SIR propagator models for areal case counts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON config file (or a run manifest to repeat a run).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Model preset; overrides `model` in the config.
    #[arg(long)]
    pub preset: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides { seed: self.seed, out: self.out.clone(), preset: self.preset.clone() }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write draws, log-likelihoods, a report and a manifest.
    Fit(RunArgs),
    /// Generate a synthetic panel in the ingestion file formats.
    Simulate(RunArgs),
    /// Rank completed runs on the same data by WAIC.
    Compare {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Directory for comparison.csv (default: current directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Posterior mean expected counts per area and day for a completed run.
    Profiles {
        run: PathBuf,
        /// Comma-separated area ids (default: all areas).
        #[arg(long, value_delimiter = ',')]
        areas: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Preset catalog.
    Models {
        #[command(subcommand)]
        action: ModelsAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum ModelsAction {
    /// Print every preset with its data model and terms.
    List,
}

/// Runs one command, printing results to stdout.
pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Fit(args) => {
            let cfg = FitConfig::load(&args.config, &args.overrides())?;
            let result = commands::fit::run(&cfg)?;
            print!("{}", result.report.table());
            println!("Outputs written to {}", cfg.out_dir()?.display());
        }
        Command::Simulate(args) => {
            let cfg = SimConfig::load(&args.config, &args.overrides())?;
            let result = commands::simulate::run(&cfg)?;
            let total: u64 = result.simulation.data.panel.cases.iter().flatten().sum();
            println!(
                "Simulated {} areas x {} days from {} ({} cases) into {}",
                result.simulation.data.n_areas(),
                result.simulation.data.n_days(),
                result.manifest.model,
                total,
                cfg.out_dir()?.display()
            );
        }
        Command::Compare { runs, out } => {
            let rows = commands::compare::compare(&runs)?;
            print!("{}", commands::compare::table(&rows));
            let dir = out.unwrap_or_else(|| PathBuf::from("."));
            output::create_dir(&dir)?;
            commands::compare::write_csv(&dir.join(commands::compare::COMPARISON), &rows)?;
        }
        Command::Profiles { run, areas, out } => {
            let written = commands::profiles::run(&run, &areas, out.as_deref())?;
            println!("Wrote {} profile files", written.len());
        }
        Command::Models { action: ModelsAction::List } => print!("{}", commands::models_list()),
    }
    Ok(())
}
