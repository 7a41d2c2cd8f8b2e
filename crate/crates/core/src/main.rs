use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use skewflow::cli::{list_presets, run_command, RunOptions};

#[derive(Parser)]
#[command(name = "skewflow", version, about = "Distorted Brownian motion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config file or a built-in preset (`preset:NAME`).
    Run {
        config: String,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; results do not depend on it.
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List built-in presets.
    Presets,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match cli.command {
        Command::Run {
            config,
            seed,
            workers,
            out,
        } => {
            let code = run_command(&config, &RunOptions { seed, workers, out });
            ExitCode::from(code as u8)
        }
        Command::Presets => {
            for line in list_presets() {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
    }
}
