use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cde_cli::commands::{self, render_report, RunOptions, DGM_CHECK_MIN_N};
use cde_cli::CliError;

#[derive(Parser)]
#[command(name = "cde", version, about = "Controlled direct effects with genetic instruments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl RunArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            seed: self.seed,
            out: self.out.clone(),
            threads: self.threads,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run Monte Carlo scenarios.
    Simulate(RunArgs),
    /// Estimate effects on a CSV extract.
    Analyze(RunArgs),
    /// Check the simulation model's summary moments.
    DgmCheck {
        #[arg(long, default_value_t = 200_000)]
        n: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Optional TOML file with a [dgm] table.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Simulate(args) => {
            let out = commands::simulate(&args.config, &args.options())?;
            println!("seed {}", out.seed);
            for r in &out.results {
                println!(
                    "{} / {} / n = {}: {} of {} replications failed",
                    r.config.method,
                    r.config.criterion,
                    r.config.n,
                    r.failures,
                    r.config.reps
                );
            }
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            Ok(0)
        }
        Command::Analyze(args) => {
            let out = commands::analyze(&args.config, &args.options())?;
            print!("{}", render_report(&out));
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            Ok(0)
        }
        Command::DgmCheck { n, seed, config } => {
            let lines = commands::dgm_check(n, seed, config.as_deref())?;
            println!("n = {n} (minimum {DGM_CHECK_MIN_N}), seed = {seed}");
            for l in &lines {
                let status = if l.pass() { "PASS" } else { "FAIL" };
                println!("{:<14} {:>9.4}  target [{}, {}]  {status}", l.name, l.value, l.low, l.high);
            }
            Ok(if lines.iter().all(|l| l.pass()) { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
