use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fedgo::cli::{parse_config, parse_seeds, run_experiment, threads_from_env};
use fedgo::verify::verify_suite;

/// Federated bandit optimization simulator.
#[derive(Debug, Parser)]
#[command(name = "fedgo", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment batch described by a TOML file.
    Run {
        /// Experiment file (an empty file gives the default setup).
        config: PathBuf,
        /// Output directory, overriding `out` in the file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seeds such as `0..9` (inclusive) or `1,4,7`, overriding the file.
        #[arg(long)]
        seeds: Option<String>,
        /// Also write regret.svg and comm.svg.
        #[arg(long)]
        svg: bool,
    },
    /// Run the built-in acceptance checks and print a pass/fail table.
    Verify {
        /// Skip the full-size comparison batches.
        #[arg(long)]
        quick: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match threads_from_env() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match cli.command {
        Command::Run { config, out, seeds, svg } => {
            let mut spec = match parse_config(&config) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            if let Some(out) = out {
                spec.out_dir = out;
            }
            if let Some(seeds) = seeds {
                match parse_seeds(&seeds) {
                    Ok(s) => spec.seeds = s,
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::from(2);
                    }
                }
            }
            spec.emit_svg |= svg;
            match run_experiment(&spec, threads) {
                Ok(report) => {
                    for f in report.failures() {
                        if let Err(msg) = &f.result {
                            eprintln!("run {} seed {} failed: {msg}", f.algorithm, f.seed);
                        }
                    }
                    let failed = report.failures().count();
                    println!(
                        "{} runs ({} failed), output in {}",
                        report.runs.len(),
                        failed,
                        spec.out_dir.display()
                    );
                    ExitCode::from(report.exit_code() as u8)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
        Command::Verify { quick } => {
            let run = || verify_suite(quick, |o| println!("{o}"));
            let outcomes = match threads {
                Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                    Ok(pool) => pool.install(run),
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::FAILURE;
                    }
                },
                None => run(),
            };
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            println!("{} checks, {} failed", outcomes.len(), failed);
            if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
