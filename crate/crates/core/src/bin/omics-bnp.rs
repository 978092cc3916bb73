//! Command-line front end: simulate data, fit the clustering model, select
//! outcome predictors, run replication studies and inspect results.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use omics_bnp::io::{
    describe_run, run_pipeline, run_replicate, run_selection_from_fit, run_simulate, RunConfig,
};
use omics_bnp::Result;

#[derive(Parser)]
#[command(name = "omics-bnp", version, about = "Bidirectional nonparametric clustering of multi-platform omics data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed; overrides the configuration file.
    #[arg(long)]
    seed: Option<u64>,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the configuration file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known clusters.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also generate censored survival outcomes.
        #[arg(long)]
        survival: bool,
    },
    /// Fit the clustering model, then select predictors if outcomes are given.
    Fit {
        #[command(flatten)]
        common: Common,
    },
    /// Select predictors using the allocations of an earlier fit.
    Select {
        #[command(flatten)]
        common: Common,
        /// Output directory of the earlier fit.
        #[arg(long)]
        fit: PathBuf,
    },
    /// Fit replicated synthetic datasets over a grid of settings.
    Replicate {
        #[command(flatten)]
        common: Common,
        /// Replicates per grid cell; overrides the configuration file.
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Print the default configuration or summarise a run directory.
    Report {
        #[command(flatten)]
        common: Common,
        /// Print every configuration default as TOML.
        #[arg(long)]
        defaults: bool,
        /// Run directory to summarise.
        dir: Option<PathBuf>,
    },
}

impl Common {
    fn resolve(&self) -> Result<(RunConfig, PathBuf)> {
        let mut config = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            config.seed = s;
        }
        let out = self
            .out
            .clone()
            .or_else(|| config.out.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok((config, out))
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, survival } => {
            let (config, out) = common.resolve()?;
            run_simulate(&config, &out, survival)?;
            println!("wrote synthetic data and {}", out.join("config.toml").display());
        }
        Command::Fit { common } => {
            let (config, out) = common.resolve()?;
            let fit = run_pipeline(&config, &out)?;
            let state = fit.stage1.state();
            let ks: Vec<usize> = (0..state.columns.len()).map(|t| state.k(t)).collect();
            println!("column clusters {ks:?}, row clusters {}", state.h());
            if let Some(sel) = &fit.selection {
                let picked: Vec<usize> = sel.fdr.selected.iter().map(|k| k + 1).collect();
                println!("selected merged clusters {picked:?}");
            }
            println!("artifacts in {}", out.display());
        }
        Command::Select { common, fit } => {
            let (config, out) = common.resolve()?;
            let (merged, sel) = run_selection_from_fit(&config, &fit, &out)?;
            let picked: Vec<usize> = sel.fdr.selected.iter().map(|k| k + 1).collect();
            println!("{} merged clusters, selected {picked:?}", merged.k());
        }
        Command::Replicate { common, replicates } => {
            let (mut config, out) = common.resolve()?;
            if let Some(r) = replicates {
                config.replication.replicates = r;
            }
            let results = run_replicate(&config, &out)?;
            let failed = results.iter().filter(|r| r.error.is_some()).count();
            println!("{} replicates, {failed} failed; see {}", results.len(), out.join("summary.csv").display());
        }
        Command::Report { common, defaults, dir } => {
            if defaults {
                let (config, _) = common.resolve()?;
                println!("# omics-bnp configuration defaults");
                print!("{}", config.to_toml()?);
            } else {
                let dir = dir.or(common.out).unwrap_or_else(|| Path::new("out").to_path_buf());
                print!("{}", describe_run(&dir)?);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
