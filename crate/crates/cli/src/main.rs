use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedchain_cli::commands::write_bench_report;
use fedchain_cli::{cmd_auction_demo, cmd_bench_ckks, cmd_gas_report, cmd_run, load_config, output_dir, CliError};

#[derive(Parser)]
#[command(
    name = "fedchain",
    version,
    about = "Auction-selected, CKKS-encrypted federated learning simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write trace, summary, ledger snapshot and model.
    Run { config: PathBuf },
    /// Time CKKS primitives and encrypted vs plain aggregation.
    BenchCkks {
        preset: String,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write per-op gas costs at the configured minimum and average prices.
    GasReport { config: PathBuf },
    /// Replay a contract scenario script.
    AuctionDemo { config: PathBuf },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config } => {
            let cfg = load_config(&config)?;
            let out = cmd_run(&cfg, &output_dir(&cfg.output_dir))?;
            println!(
                "{} rounds, final accuracy {:.4}; outputs in {}",
                out.rounds_completed,
                out.final_accuracy,
                out.dir.display()
            );
        }
        Command::BenchCkks { preset, reps, out } => {
            let report = cmd_bench_ckks(&preset, reps)?;
            print!("{}", report.to_csv());
            let path = write_bench_report(&report, &output_dir(&out))?;
            println!("written to {}", path.display());
        }
        Command::GasReport { config } => {
            let cfg = load_config(&config)?;
            let path = cmd_gas_report(&cfg, &output_dir(&cfg.output_dir))?;
            print!(
                "{}",
                std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?
            );
        }
        Command::AuctionDemo { config } => {
            let cfg = load_config(&config)?;
            let files = cmd_auction_demo(&cfg, &output_dir(&cfg.output_dir))?;
            let trace = files.first().map(PathBuf::as_path).unwrap_or(Path::new(""));
            print!(
                "{}",
                std::fs::read_to_string(trace).map_err(|e| CliError::io(trace, e))?
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
