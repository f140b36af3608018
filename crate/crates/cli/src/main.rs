//! `qnbar`: heavy-traffic analysis and simulation of multiclass queueing
//! networks under static buffer priority.
//!
//! Every subcommand writes CSV to stdout (or `--out`) and a short summary
//! to stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod io;

#[derive(Parser, Debug)]
#[command(name = "qnbar", version, about = "Heavy-traffic analysis, simulation and BAR checks for priority queueing networks")]
struct Cli {
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Output {
    /// CSV destination; stdout when absent.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Reflection matrix, covariance, drift and hypothesis checks for a heavy-traffic family.
    Analyze(commands::AnalyzeArgs),
    /// Steady-state estimates from the discrete-event simulator.
    Simulate(commands::SimulateArgs),
    /// Exact stationary functionals of an exponential network on a truncated state space.
    Oracle(commands::OracleArgs),
    /// Simulate an SRBM given inline or from an `analyze --save` file.
    Srbm(commands::SrbmArgs),
    /// Run the full acceptance suite.
    Verify(commands::VerifyArgs),
    /// Scaled means along a grid of r against the limiting SRBM.
    Sweep(commands::SweepArgs),
    /// Residual of the asymptotic BAR over r² at fixed θ.
    Abar(commands::AbarArgs),
    /// Tail identities between time averages and Palm expectations.
    Palm(commands::PalmArgs),
    /// State space collapse diagnostics at one r.
    Ssc(commands::SscArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Analyze(a) => commands::analyze(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Oracle(a) => commands::oracle(a),
        Command::Srbm(a) => commands::srbm(a),
        Command::Verify(a) => commands::verify(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Abar(a) => commands::abar(a),
        Command::Palm(a) => commands::palm(a),
        Command::Ssc(a) => commands::ssc(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
