use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use itogen::cli::{self, Overrides, RunConfig, Table};
use itogen::losses::Scheme;
use itogen::{Error, Result};

#[derive(Parser)]
#[command(name = "itogen", version, about = "Learn and sample Ito processes from irregular observations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; missing fields take default values.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory of the run.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Global seed (ITOGEN_SEED takes precedence).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for simulation and generation.
    #[arg(long)]
    threads: Option<usize>,
    /// Start from the OU preset instead of GBM when no config file is given.
    #[arg(long)]
    ou: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate paths and draw observation times.
    Simulate(Common),
    /// Train a coefficient model on the simulated observations.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scheme: Option<Scheme>,
    },
    /// Sample new paths with a trained model.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scheme: Option<Scheme>,
    },
    /// Compare generated datasets with the reference paths.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Dataset directories; defaults to every generated dataset of the run.
        datasets: Vec<PathBuf>,
    },
    /// Run every stage for a benchmark table.
    Reproduce {
        #[command(flatten)]
        common: Common,
        /// table1 (GBM) or table2 (OU).
        #[arg(long, default_value = "table1")]
        table: Table,
        /// Fraction of the full experiment size; 0 prints the plan only.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
    /// Render SVG charts of a run.
    Plot(Common),
}

fn config(common: &Common, scheme: Option<Scheme>) -> Result<RunConfig> {
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config("threads", e.to_string()))?;
    }
    let base = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None if common.ou => RunConfig::ou(),
        None => RunConfig::gbm(),
    };
    base.resolve(&Overrides { out: common.out.clone(), seed: common.seed, scheme })
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(c) => {
            let dir = cli::cmd_simulate(&config(&c, None)?)?;
            println!("wrote {}", dir.display());
        }
        Command::Train { common, scheme } => {
            let dir = cli::cmd_train(&config(&common, scheme)?, true)?;
            println!("wrote {}", dir.display());
        }
        Command::Generate { common, scheme } => {
            let dir = cli::cmd_generate(&config(&common, scheme)?)?;
            println!("wrote {}", dir.display());
        }
        Command::Evaluate { common, datasets } => {
            let cfg = config(&common, None)?;
            let report = cli::cmd_evaluate(&cfg, &datasets)?;
            print!("{}", report.parameters_csv());
            for (name, reason) in &report.failed {
                println!("{name}: no estimate ({reason})");
            }
            println!("wrote {}", cfg.eval_dir().display());
        }
        Command::Reproduce { common, table, scale } => {
            let cfg = config(&common, None)?;
            print!("{}", cli::reproduce_plan(table, scale, &cfg)?);
            if let Some(rep) = cli::cmd_reproduce(table, scale, &cfg)? {
                print!("{}", rep.table);
                println!("wrote {}", rep.config.out.display());
            }
        }
        Command::Plot(c) => {
            for p in cli::cmd_plot(&config(&c, None)?)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
