use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use unobs_stab_cli::analyze::{analyze, zeros_report};
use unobs_stab_cli::config::parse_config;
use unobs_stab_cli::scenario::run_scenario;

#[derive(Parser)]
#[command(version, about = "Closed-loop scenarios for output feedback at unobservable targets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every initial condition of a scenario and write CSV trajectories and a summary
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Maximum number of concurrent runs
        #[arg(long)]
        jobs: Option<usize>,
        /// Also write |x| and error plots
        #[arg(long)]
        svg: bool,
    },
    /// Determinant identity, Gramian sweep, control bound and radii report
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the first zeros of J0 and J1' and the weak-norm constant
    Zeros,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> anyhow::Result<bool> {
    match command {
        Command::Simulate { config, out, jobs, svg } => {
            let cfg = parse_config(&config)?;
            for w in &cfg.warnings {
                eprintln!("warning: {w}");
            }
            let outcome = run_scenario(&cfg, &out, jobs, svg)?;
            for r in &outcome.runs {
                let status = if r.pass { "pass" } else { "FAIL" };
                println!("run {:03}: {status} {}", r.index, r.reasons.join("; "));
            }
            println!("summary written to {}", outcome.summary_path.display());
            Ok(outcome.all_pass)
        }
        Command::Analyze { config, out } => {
            let cfg = parse_config(&config)?;
            for w in &cfg.warnings {
                eprintln!("warning: {w}");
            }
            let path = analyze(&cfg, &out)?;
            print!("{}", std::fs::read_to_string(&path)?);
            Ok(true)
        }
        Command::Zeros => {
            print!("{}", zeros_report());
            Ok(true)
        }
    }
}
