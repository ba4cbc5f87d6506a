use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use echo_cli::run::{format_estimate, quantum_steps};
use echo_cli::{estimate, load_config, resolve, run, RunError, RunOptions};

#[derive(Parser)]
#[command(name = "becho", version, about = "Boltzmann echo experiments on coupled kicked rotators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write curve.csv, fit.txt and meta.txt.
    Run(Common),
    /// Print step count, memory and wall-time estimates without running.
    Estimate(Common),
}

#[derive(Args)]
struct Common {
    config: PathBuf,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long)]
    output: Option<PathBuf>,
    /// fig1_repro at N = 1024.
    #[arg(long)]
    full: bool,
}

impl Common {
    fn options(&self) -> RunOptions {
        RunOptions {
            workers: self.workers,
            output: self.output.clone(),
            full: self.full,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<(), RunError> {
    match command {
        Command::Run(args) => {
            let opts = args.options();
            let config = resolve(load_config(&args.config)?, &opts);
            let workers = opts.worker_count();
            let report = match run(&config, workers) {
                Err(RunError::Budget { estimated, budget }) => {
                    if let Ok(e) = estimate(&config, workers) {
                        eprint!("{}", format_estimate(&config, &e));
                    }
                    return Err(RunError::Budget { estimated, budget });
                }
                other => other?,
            };
            print!("{}", report.summary);
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
        Command::Estimate(args) => {
            let opts = args.options();
            let config = resolve(load_config(&args.config)?, &opts);
            let e = estimate(&config, opts.worker_count())?;
            print!("{}", format_estimate(&config, &e));
            if quantum_steps(&config) > config.step_budget {
                println!("note: exceeds step_budget, `run` would refuse");
            }
            Ok(())
        }
    }
}
