//! `muse`: train energy priors, reconstruct, evaluate denoisers, export
//! score fields and run the reproduction and golden suites.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use muse_cli::commands::{load_config, run_command, Overrides};
use muse_cli::error::{CliError, EXIT_FAILURE};
use muse_cli::golden::run_suite;
use muse_cli::repro::{find_claim, CLAIMS};

#[derive(Parser)]
#[command(name = "muse", version, about = "Multiscale energy priors for inverse problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat key=value config file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the `out_path` key.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model at one or several noise scales.
    Train(ConfigArgs),
    /// Solve a MAP reconstruction problem.
    Reconstruct(ConfigArgs),
    /// PSNR table of denoisers over a held-out set.
    DenoiseEval(ConfigArgs),
    /// Score and energy grids of 2-D models and the oracle.
    FieldExport(ConfigArgs),
    /// Run acceptance claims and print one verdict per claim.
    Repro {
        /// Claim number or name; all claims when omitted.
        #[arg(long)]
        claim: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the golden regression suite.
    Golden {
        #[arg(long, default_value = "goldens/v1")]
        dir: PathBuf,
        /// Only cases whose name contains this string.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, default_value = "target/golden")]
        out: PathBuf,
        /// Record observed values instead of checking them.
        #[arg(long)]
        bless: bool,
    },
}

fn config_command(name: &str, args: &ConfigArgs) -> Result<(), CliError> {
    let overrides = Overrides {
        seed: args.seed,
        out: args.out.clone(),
    };
    let cfg = load_config(&args.config, &overrides)?;
    let summary = run_command(name, &cfg)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).expect("summary serializes")
    );
    Ok(())
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Train(a) => config_command("train", &a).map(|_| true),
        Command::Reconstruct(a) => config_command("reconstruct", &a).map(|_| true),
        Command::DenoiseEval(a) => config_command("denoise-eval", &a).map(|_| true),
        Command::FieldExport(a) => config_command("field-export", &a).map(|_| true),
        Command::Repro { claim, seed } => {
            let selected: Vec<_> = match claim {
                Some(k) => vec![find_claim(&k)
                    .ok_or_else(|| CliError::Config(format!("unknown claim `{k}`")))?],
                None => CLAIMS.to_vec(),
            };
            let mut all = true;
            for (_, _, f) in selected {
                let report = f(seed)?;
                for (k, v) in &report.metrics {
                    println!("  {k} = {v:.6e}");
                }
                for n in &report.notes {
                    println!("  {n}");
                }
                println!("{}", report.verdict_line());
                all &= report.passed;
            }
            Ok(all)
        }
        Command::Golden {
            dir,
            filter,
            out,
            bless,
        } => {
            let outcomes = run_suite(&dir, filter.as_deref(), &out, bless)?;
            let mut all = true;
            for o in &outcomes {
                println!("case {}: {}", o.name, if o.passed() { "PASS" } else { "FAIL" });
                for f in &o.failures {
                    println!("  {f}");
                }
                all &= o.passed();
            }
            Ok(all)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILURE as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
