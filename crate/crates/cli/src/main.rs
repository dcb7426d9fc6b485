use std::path::PathBuf;
use std::process::ExitCode;

use adaptive_lsvi_cli::{cmd_diagnose, cmd_run, cmd_sweep, timed, CliError, Overrides};
use clap::{Parser, Subcommand};

/// Episodic linear-MDP experiments with limited adaptivity.
#[derive(Parser)]
#[command(name = "lsvi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment; flags override the config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a cartesian suite of experiments in parallel.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a stored run artifact (`run.json`).
    Diagnose {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (result, secs) = timed(|| -> Result<String, CliError> {
        match &cli.command {
            Command::Run { config, out, overrides } => {
                let s = cmd_run(config, overrides, out)?;
                Ok(format!(
                    "regret {:.6}, {} switches, {} refits",
                    s.regret, s.n_switches, s.n_refits
                ))
            }
            Command::Sweep { config, out } => {
                let rows = cmd_sweep(config, out.as_deref())?;
                Ok(format!("{} runs", rows.len()))
            }
            Command::Diagnose { config, out } => {
                let d = cmd_diagnose(config, out.as_deref())?;
                Ok(format!(
                    "{} passed, {} not applicable",
                    d.n_pass, d.n_not_applicable
                ))
            }
        }
    });
    match result {
        Ok(msg) => {
            eprintln!("{msg} ({secs:.2}s)");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
