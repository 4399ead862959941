use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lbmesh_cli::{list_presets, parse_config, preset, run_to_file, ExperimentConfig};

#[derive(Parser)]
#[command(name = "lbmesh", about = "Load-balancing simulation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a JSON config or a named preset and write its CSV.
    Run {
        config: Option<PathBuf>,
        /// Directory for `<experiment_id>.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
    },
    /// List preset names.
    Presets,
}

fn load(config: Option<PathBuf>, name: Option<String>) -> Result<ExperimentConfig, String> {
    match (config, name) {
        (Some(_), Some(_)) => Err("give either a config file or --preset, not both".into()),
        (None, None) => Err("a config file or --preset is required".into()),
        (None, Some(n)) => preset(&n).map_err(|e| e.to_string()),
        (Some(p), None) => {
            let text = std::fs::read_to_string(&p).map_err(|e| format!("reading {}: {e}", p.display()))?;
            let parsed = parse_config(&text).map_err(|e| e.to_string())?;
            for w in parsed.warnings {
                eprintln!("warning: {w}");
            }
            Ok(parsed.config)
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Presets => {
            for name in list_presets() {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
        Command::Run { config, out, preset } => {
            let result =
                load(config, preset).and_then(|cfg| run_to_file(&cfg, out.as_deref()).map_err(|e| e.to_string()));
            match result {
                Ok(path) => {
                    println!("{}", path.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
