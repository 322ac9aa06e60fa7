//! `srn`: run, validate and compare secure-repeater network scenarios.
//!
//! Exit codes: 0 when the payload was delivered, 2 when the session was
//! aborted or could not be decoded, 1 on usage or configuration errors.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use srn_core::harness::{compare_scenario, load_scenario, ConfigError, Scenario, BUNDLED};
use srn_core::run_scenario;

#[derive(Parser)]
#[command(name = "srn", about = "Secure-repeater network simulator", disable_version_flag = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write report.json, qber.csv and transcripts.
    Run {
        /// Scenario file, or the name of a bundled scenario.
        #[arg(long)]
        config: String,
        /// Replaces the scenario's master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "srn-out")]
        out: PathBuf,
    },
    /// Check a scenario file and print the resolved scenario.
    Validate {
        #[arg(long)]
        config: String,
    },
    /// Run a scenario as secure-repeater and as trusted-repeater network and
    /// report what a compromised node reveals in each.
    Compare {
        #[arg(long)]
        config: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the comparison to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the version.
    Version,
    /// List the bundled scenarios.
    Scenarios,
}

const USAGE: u8 = 1;
const NOT_DELIVERED: u8 = 2;

fn load(config: &str, seed: Option<u64>) -> Result<Scenario, Vec<ConfigError>> {
    let mut s = load_scenario(config)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    Ok(s)
}

fn report_config_errors(config: &str, errors: &[ConfigError]) -> ExitCode {
    eprintln!("error: invalid scenario `{config}`");
    for e in errors {
        eprintln!("  {e}");
    }
    ExitCode::from(USAGE)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Version => {
            println!("srn {}", env!("CARGO_PKG_VERSION"));
            Ok(ExitCode::SUCCESS)
        }
        Command::Scenarios => {
            for (name, _) in BUNDLED {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => match load(&config, None) {
            Ok(s) => {
                println!("{}", serde_json::to_string_pretty(&s)?);
                eprintln!(
                    "ok: `{}` ({} nodes, {} links)",
                    s.name,
                    s.topology.nodes.len(),
                    s.topology.links.len()
                );
                Ok(ExitCode::SUCCESS)
            }
            Err(errors) => Ok(report_config_errors(&config, &errors)),
        },
        Command::Run { config, seed, out } => {
            let s = match load(&config, seed) {
                Ok(s) => s,
                Err(errors) => return Ok(report_config_errors(&config, &errors)),
            };
            let output = run_scenario(&s).with_context(|| format!("running `{}`", s.name))?;
            output
                .write_to(&out)
                .with_context(|| format!("writing outputs to {}", out.display()))?;
            let r = &output.report;
            println!(
                "{}: {} after {} frames, {} retransmissions, flagged hops: [{}]",
                r.scenario,
                r.outcome.status,
                r.frames,
                r.retransmissions,
                r.flagged_hops.join(", ")
            );
            for h in &r.hops {
                match h.mean_qber {
                    Some(q) => println!("  {} mean QBER {:.4} ({:?})", h.hop, q, h.verdict),
                    None => println!("  {} no check rounds ({:?})", h.hop, h.verdict),
                }
            }
            Ok(if r.is_delivered() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(NOT_DELIVERED)
            })
        }
        Command::Compare { config, seed, out } => {
            let s = match load(&config, seed) {
                Ok(s) => s,
                Err(errors) => return Ok(report_config_errors(&config, &errors)),
            };
            let (report, _, _) = compare_scenario(&s).with_context(|| format!("comparing `{}`", s.name))?;
            let json = report.to_json();
            print!("{json}");
            if let Some(path) = out {
                std::fs::write(&path, &json).with_context(|| format!("writing {}", path.display()))?;
            }
            let delivered = report.srn_outcome.status == "delivered" && report.trn_outcome.status == "delivered";
            Ok(if delivered {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(NOT_DELIVERED)
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(USAGE)
        }
    }
}
