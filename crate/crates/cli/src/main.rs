//! Batch driver for the cross-Kerr conversion simulator: parse an experiment
//! descriptor (named preset or JSON file), dispatch to the protocol library,
//! and emit the result document.
//!
//! Exit codes: 0 on success, 1 when a protocol run fails (a typed error
//! record is still written), 2 on descriptor syntax or schema violations
//! (nothing is written).

mod descriptor;
mod output;
mod presets;
mod runner;

use clap::{Parser, Subcommand};
use descriptor::ExperimentDescriptor;
use output::Format;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "kerrconv",
    version,
    about = "Cross-Kerr quantum-state conversion simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a preset or a descriptor file.
    Run {
        /// Named preset scenario.
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// Path to a JSON descriptor.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Output format.
        #[arg(long, default_value = "json")]
        format: String,
        /// Override every seed in the descriptor.
        #[arg(long)]
        seed: Option<u64>,
        /// Force the dense brute-force circuit path where available.
        #[arg(long)]
        oracle: bool,
    },
    /// List the named preset scenarios.
    ListPresets,
    /// Print the versioned JSON schema of experiment descriptors.
    Schema,
}

const DESCRIPTOR_SCHEMA: &str = include_str!("../schema/descriptor.schema.json");

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListPresets => {
            let mut listing = format!("{:<20} description\n", "name");
            for p in presets::PRESETS {
                listing.push_str(&format!("{:<20} {}\n", p.name, p.description));
            }
            let _ = emit(&None, &listing);
            ExitCode::SUCCESS
        }
        Command::Schema => {
            let _ = emit(&None, DESCRIPTOR_SCHEMA);
            ExitCode::SUCCESS
        }
        Command::Run {
            preset,
            config,
            out,
            format,
            seed,
            oracle,
        } => {
            let format = match format.as_str() {
                "json" => Format::Json,
                "csv" => Format::Csv,
                other => {
                    eprintln!("error: unknown format {other:?} (expected json or csv)");
                    return ExitCode::from(2);
                }
            };
            let json = match (&preset, &config) {
                (Some(name), None) => match presets::find(name) {
                    Some(p) => p.json.to_string(),
                    None => {
                        eprintln!("error: unknown preset {name:?}; run `kerrconv list-presets`");
                        return ExitCode::from(2);
                    }
                },
                (None, Some(path)) => match std::fs::read_to_string(path) {
                    Ok(s) => s,
                    Err(e) => {
                        eprintln!("error: cannot read {}: {e}", path.display());
                        return ExitCode::from(2);
                    }
                },
                _ => {
                    eprintln!("error: exactly one of --preset or --config is required");
                    return ExitCode::from(2);
                }
            };
            let mut parsed = match ExperimentDescriptor::parse(&json) {
                Ok(d) => d,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            if let Some(s) = seed {
                parsed.set_seed(s);
            }
            match runner::run(&parsed, oracle) {
                Ok(result) => {
                    let rendered = output::render(&parsed, &result, format);
                    if let Err(e) = emit(&out, &rendered) {
                        eprintln!("error: cannot write output: {e}");
                        return ExitCode::from(2);
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    let doc = output::error_document(Some(&parsed), &e.to_string());
                    let rendered = format!(
                        "{}\n",
                        serde_json::to_string_pretty(&doc).expect("error doc serializes")
                    );
                    let _ = emit(&out, &rendered);
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}

fn emit(out: &Option<PathBuf>, content: &str) -> std::io::Result<()> {
    use std::io::Write;
    match out {
        Some(path) => std::fs::write(path, content),
        None => {
            // tolerate a closed pipe (e.g. piping into head)
            match std::io::stdout().write_all(content.as_bytes()) {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                other => other,
            }
        }
    }
}
