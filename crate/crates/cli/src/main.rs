//! `ucmpc`: constraint tightening and closed-loop comparison runs from a
//! scenario file.
//!
//! Exit status: 0 when every check passes, 2 when a verdict or an expected
//! value fails, 1 on usage or execution errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ucmpc::mpc::Variant;

use ucmpc_cli::{commands, Outcome, RunOptions};

#[derive(Debug, Parser)]
#[command(name = "ucmpc", version, about = "Uncertainty-compensated MPC design and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute the tightened sets and bounds and compare them with the
    /// scenario's expected values.
    Tighten {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the selected controller variants.
    Run {
        config: PathBuf,
        /// Repeatable; defaults to the scenario's `variants`.
        #[arg(long = "variant", value_name = "uc|vanilla|tube")]
        variants: Vec<Variant>,
        /// Switch the unmatched disturbance off (bounds are unchanged).
        #[arg(long)]
        no_unmatched: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in closed-form checks.
    Selftest,
}

fn execute(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Tighten { config, out } => {
            let t = commands::tighten(&config, out.as_deref())?;
            print!("{}", t.report);
            Ok(t.outcome)
        }
        Command::Run {
            config,
            variants,
            no_unmatched,
            out,
        } => {
            let r = commands::run(
                &config,
                &RunOptions {
                    variants: &variants,
                    no_unmatched,
                    out: out.as_deref(),
                },
            )?;
            print!("{}", r.table);
            println!("outputs in {}", r.dir.display());
            Ok(r.outcome)
        }
        Command::Selftest => {
            let (text, outcome) = commands::selftest();
            print!("{text}");
            Ok(outcome)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
