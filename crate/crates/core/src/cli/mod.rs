//! Command-line front end: experiment files, orchestration and persistence.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};

pub mod commands;
pub mod config;

pub use config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "pinlab", version, about = "Vortex pinning laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the PDE for a single epsilon and track its vortices.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate the limiting ODE and classify where trajectories pin.
    Ode {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the PDE for every epsilon and fit convergence rates.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Compare the tracks of a simulate run with the trajectories of an ode run.
    Compare {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        ode: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarise a run or sweep directory as Markdown.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

/// Process exit code for a failed command: 2 for invalid input, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_validation() {
        2
    } else {
        1
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let r = commands::simulate(&cfg, out.as_deref())?;
            println!("{}", r.dir.display());
        }
        Command::Ode { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let r = commands::ode(&cfg, out.as_deref())?;
            for t in &r.trajectories {
                let status = match t.pinning.critical_point() {
                    Some(cp) => format!(
                        "pinned at ({:.6}, {:.6}) [{:?}]",
                        cp.location[0], cp.location[1], cp.classification
                    ),
                    None if t.exited => "left the domain".to_string(),
                    None => "not pinned".to_string(),
                };
                println!("trajectory {}: {status}", t.traj_id);
            }
        }
        Command::Sweep { config, out, jobs } => {
            let cfg = ExperimentConfig::load(&config)?;
            let r = commands::sweep(&cfg, out.as_deref(), jobs)?;
            println!(
                "sup_dev slope {:.3}, l2_dev slope {:.3}, h1_dev slope {:.3}",
                r.rates.sup_dev.slope, r.rates.l2_dev.slope, r.rates.h1_dev.slope
            );
        }
        Command::Compare { run, ode, out } => {
            let r = commands::compare(&run, &ode, out.as_deref())?;
            println!("max PDE-ODE distance {:.6}", r.max_error);
        }
        Command::Report { out } => print!("{}", commands::report(&out)?),
    }
    Ok(())
}
