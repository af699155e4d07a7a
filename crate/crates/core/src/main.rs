use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use poroade::harness::{run_scenario, Mode};

/// Biot-Allard poroelasticity with auxiliary-variable memory terms.
#[derive(Debug, Parser)]
#[command(name = "poroade", version)]
struct Cli {
    /// Scenario document (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Run directory for all outputs.
    #[arg(long, global = true, value_name = "DIR", default_value = "run")]
    out: PathBuf,
    /// Print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a permeability series to frequency samples.
    Fit,
    /// Evaluate the well-posedness condition and c_min.
    Check,
    /// Time-step the auxiliary-variable system.
    RunAde,
    /// Time-step the convolution form.
    RunConv,
    /// Refinement study of the distance between both solvers.
    Compare,
    /// Manufactured-solution convergence study.
    Mms,
    /// Frequency response of the auxiliary equations.
    Transfer,
}

impl Command {
    fn mode(&self) -> Mode {
        match self {
            Command::Fit => Mode::Fit,
            Command::Check => Mode::Check,
            Command::RunAde => Mode::RunAde,
            Command::RunConv => Mode::RunConv,
            Command::Compare => Mode::Compare,
            Command::Mms => Mode::Mms,
            Command::Transfer => Mode::Transfer,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(config) = cli.config else {
        eprintln!("error: --config PATH is required");
        return ExitCode::from(2);
    };
    match run_scenario(cli.command.mode(), &config, &cli.out) {
        Ok(record) => {
            if !cli.quiet {
                for line in &record.lines {
                    println!("{line}");
                }
                println!("outputs written to {}", record.out_dir.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
