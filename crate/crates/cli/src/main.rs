use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use exterior_cli::{run_file, Command, RunOptions, EXIT_USAGE};

/// Experiments on exterior solutions of det(D²u) = 1.
///
/// Exit status: 0 pass, 1 verification failure, 2 usage or config error,
/// 3 numerical failure.
#[derive(Parser)]
#[command(name = "exterior", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Samples of a radial solution and its analytic expansion.
    Radial(Common),
    /// Flux residues of a solution over several surfaces.
    Residue(Common),
    /// Numerical checks of the identities behind the expansion at infinity.
    Verify(Common),
    /// Grid solve, shell fit and residue comparison.
    SolveFit(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config of the run.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed of randomized quadrature rules (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (all cores when omitted).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    let (command, common) = match cli.command {
        Cmd::Radial(c) => (Command::Radial, c),
        Cmd::Residue(c) => (Command::Residue, c),
        Cmd::Verify(c) => (Command::Verify, c),
        Cmd::SolveFit(c) => (Command::SolveFit, c),
    };
    if let Some(k) = common.threads {
        if k == 0 || rayon::ThreadPoolBuilder::new().num_threads(k).build_global().is_err() {
            eprintln!("error: --threads must be a positive integer");
            return ExitCode::from(EXIT_USAGE as u8);
        }
    }
    let options = RunOptions {
        out: common.out,
        seed: common.seed,
    };
    match run_file(command, &common.config, &options) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            for failure in &outcome.failures {
                eprintln!("verification failed: {failure}");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
