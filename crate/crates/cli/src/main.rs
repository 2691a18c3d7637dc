//! Command-line driver: runs one pipeline command from a TOML
//! configuration file, validates configurations, and prints the full
//! default configuration.
//!
//! On failure a machine-readable error record `{"code": ..., "message":
//! ...}` goes to stderr and the process exits nonzero.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hdheavy::pipeline::{load_config, run, RunConfig};

#[derive(Parser)]
#[command(
    name = "hdheavy",
    about = "Hierarchical realized-measure factor models for large covariance matrices",
    long_about = "Builds realized measures from daily returns, estimates hierarchical \
                  factor models by stepwise quasi-maximum likelihood, produces rolling \
                  one-step-ahead covariance forecasts, and evaluates them with matrix \
                  losses, model confidence sets, and minimum variance portfolios. \
                  All behavior is driven by a TOML configuration file; artifacts are \
                  written to the configured output directory with a manifest."
)]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Execute the command named in the configuration file.
    Run {
        /// Path to the TOML configuration.
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Check a configuration file and list every problem found.
    Validate {
        /// Path to the TOML configuration.
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Print the complete default configuration as TOML.
    PrintConfig,
}

fn emit_error(code: &str, message: &str) {
    let record = serde_json::json!({ "code": code, "message": message });
    eprintln!("{record}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        CliCommand::Run { config } => {
            let parsed = match load_config(&config) {
                Ok(c) => c,
                Err(e) => {
                    emit_error(e.code(), &e.to_string());
                    return ExitCode::FAILURE;
                }
            };
            match run(&parsed) {
                Ok(summary) => {
                    println!(
                        "wrote {} artifact(s) to {}",
                        summary.artifacts.len(),
                        summary.output_dir.display()
                    );
                    for name in &summary.artifacts {
                        println!("  {name}");
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    emit_error(e.code(), &e.to_string());
                    ExitCode::FAILURE
                }
            }
        }
        CliCommand::Validate { config } => match load_config(&config) {
            Ok(parsed) => {
                let issues = parsed.validation_issues();
                if issues.is_empty() {
                    println!("configuration is valid");
                    ExitCode::SUCCESS
                } else {
                    for issue in &issues {
                        eprintln!("problem: {issue}");
                    }
                    emit_error(
                        "config",
                        &format!("{} problem(s) found", issues.len()),
                    );
                    ExitCode::FAILURE
                }
            }
            Err(e) => {
                emit_error(e.code(), &e.to_string());
                ExitCode::FAILURE
            }
        },
        CliCommand::PrintConfig => match RunConfig::default().to_toml_string() {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                emit_error(e.code(), &e.to_string());
                ExitCode::FAILURE
            }
        },
    }
}
