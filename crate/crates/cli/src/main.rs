use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use robust_da_cli::commands::{cmd_grid, cmd_run, cmd_verify, init_threads};
use robust_da_cli::CliError;

/// Robust data assimilation twin experiments on Lorenz-96.
#[derive(Parser)]
#[command(name = "robust-da", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Output directory (default: results/<config stem>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the fast oracle suite.
    Verify {
        #[arg(long, hide = true)]
        corrupt_adjoint: bool,
    },
    /// Run an experiment grid: lorenz_3dvar, lorenz_4dvar or lorenz_letkf.
    Grid {
        protocol: String,
        #[arg(long, default_value = "results/grid")]
        out: PathBuf,
        /// Number of seeds, 0..K.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Run { config, out } => cmd_run(&config, out.as_deref()).map(|_| ()),
        Command::Verify { corrupt_adjoint } => cmd_verify(corrupt_adjoint),
        Command::Grid { protocol, out, seeds } => cmd_grid(&protocol, &out, seeds).map(|_| ()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
