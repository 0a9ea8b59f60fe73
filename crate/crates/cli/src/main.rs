mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::SynthArgs;
use config::RunArgs;

#[derive(Parser)]
#[command(name = "rdoll", version, about = "Nested factor risk models and intraday backtests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured strategies and write metrics.csv and pnl_daily.csv.
    Backtest(RunArgs),
    /// Check the correlation model built on a classification file.
    ModelCheck(RunArgs),
    /// Show how regression-based specific risks fail to add up per stock.
    DemoFallacy {
        #[command(flatten)]
        run: RunArgs,
        /// sub-industry, industry, sector or identity.
        #[arg(long, default_value = "sub-industry")]
        level: String,
        /// Most recent return dates to use (default: all).
        #[arg(long)]
        window: Option<usize>,
    },
    /// Write a synthetic price panel and classification.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        stocks: usize,
        #[arg(long, default_value_t = 527)]
        dates: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Backtest(args) => commands::backtest(&args),
        Command::ModelCheck(args) => commands::model_check(&args),
        Command::DemoFallacy { run, level, window } => {
            commands::demo_fallacy(&run, commands::parse_level(&level)?, window)
        }
        Command::Synth {
            out,
            stocks,
            dates,
            seed,
        } => commands::synth(&SynthArgs {
            out,
            stocks,
            dates,
            seed,
        }),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
