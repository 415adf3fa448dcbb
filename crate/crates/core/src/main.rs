use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use crowd::cli::{run_cli, Command, Flags};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    /// Run a scenario and write snapshots and metrics.
    Simulate,
    /// Compare exit times with and without the room's obstacles.
    Braess,
    /// Finite-difference check of the linearized solution.
    Gateaux,
    /// Evolve a reachable set and check the confinement conditions.
    Confine,
}

#[derive(Debug, Parser)]
#[command(name = "crowd", version, about = "Macroscopic crowd dynamics with nonlocal conservation laws")]
struct Args {
    command: Cmd,
    /// Scenario file (TOML).
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the grid spacing.
    #[arg(long)]
    dx: Option<f64>,
    /// Override the final time.
    #[arg(long = "end-time")]
    end_time: Option<f64>,
    /// Reserved; runs are deterministic.
    #[arg(long)]
    seedless: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    crowd::init_threads();
    let args = Args::parse();
    let command = match args.command {
        Cmd::Simulate => Command::Simulate,
        Cmd::Braess => Command::Braess,
        Cmd::Gateaux => Command::Gateaux,
        Cmd::Confine => Command::Confine,
    };
    let flags = Flags { out: Some(args.out), dx: args.dx, end_time: args.end_time, seedless: args.seedless };
    let outcome = run_cli(command, &args.config, &flags);
    if outcome.code == 0 {
        println!("{}", outcome.summary);
    } else {
        eprintln!("{}", outcome.summary);
    }
    ExitCode::from(outcome.code as u8)
}
