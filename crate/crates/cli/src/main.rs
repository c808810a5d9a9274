//! `contagion`: simulate, measure, fit and test two-market volatility
//! contagion from the command line.

use std::path::PathBuf;
use std::process::exit;

use clap::{Parser, Subcommand};

use contagion_cli::commands;
use contagion_cli::config::{self, Overrides};
use contagion_cli::error::CliResult;

#[derive(Parser)]
#[command(
    name = "contagion",
    version,
    about = "Two-market volatility contagion: simulation, realized measures, QMLE, and break tests"
)]
struct Cli {
    /// TOML configuration file; defaults describe the baseline study.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for the study runner (overrides the config file).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Realized-variance estimator (overrides the config file).
    #[arg(long, global = true, value_parser = ["msrv", "arp", "paremedi"])]
    estimator: Option<String>,

    /// Output directory (overrides the config file).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a tick panel with its latent ground truth
    Simulate,
    /// Reduce a tick file to daily realized measures
    Measure {
        /// Tick CSV (`market,day,time,price`)
        #[arg(long)]
        ticks: PathBuf,
    },
    /// Fit the 18-coordinate daily recursion to a measure file
    Fit {
        /// Daily measure CSV produced by `measure`
        #[arg(long)]
        measures: PathBuf,
    },
    /// Split a measure file at a break day and test parameter equality
    TestBreak {
        /// Daily measure CSV produced by `measure`
        #[arg(long)]
        measures: PathBuf,
        /// 0-based first day of the second window (overrides the config)
        #[arg(long)]
        break_day: Option<usize>,
        /// Model family to compare across the break
        #[arg(long, value_parser = ["garch", "har"])]
        model: Option<String>,
    },
    /// Fit the 20-coordinate lag-average contagion regression
    Har {
        /// Daily measure CSV produced by `measure`
        #[arg(long)]
        measures: PathBuf,
    },
    /// Run the Monte Carlo study: error grids plus null calibration
    Study,
}

fn run(cli: &Cli) -> CliResult<()> {
    let over = Overrides {
        seed: cli.seed,
        workers: cli.workers,
        estimator: cli.estimator.clone(),
        out_dir: cli.out_dir.clone(),
    };
    let ctx = config::resolve(cli.config.as_deref(), &over)?;
    std::fs::create_dir_all(&ctx.out_dir)?;

    let files = match &cli.cmd {
        Cmd::Simulate => commands::cmd_simulate(&ctx)?,
        Cmd::Measure { ticks } => commands::cmd_measure(&ctx, ticks)?,
        Cmd::Fit { measures } => commands::cmd_fit(&ctx, measures)?,
        Cmd::TestBreak { measures, break_day, model } => {
            commands::cmd_test_break(&ctx, measures, *break_day, model.as_deref())?
        }
        Cmd::Har { measures } => commands::cmd_har(&ctx, measures)?,
        Cmd::Study => commands::cmd_study(&ctx)?,
    };
    for f in &files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // clap prints help/version (exit 0) and usage errors (exit 2) itself
        Err(e) => e.exit(),
    };
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        exit(i32::from(e.code));
    }
}
