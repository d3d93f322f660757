use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use contmeas::{load_config, presets, run, ConfigError, RunError};

#[derive(Parser)]
#[command(name = "contmeas", version, about = "Continuous position-momentum measurement experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a configuration file.
    Run { config: PathBuf },
    /// Run a built-in scenario.
    Preset {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List the built-in scenarios.
    ListPresets,
    /// Check a configuration file without running it.
    Validate { config: PathBuf },
}

fn execute(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Run { config } => {
            let cfg = load_config(&config)?;
            let summary = run(&cfg, &PathBuf::from(&cfg.output))?;
            println!("wrote {} files to {}", summary.files.len() + 1, cfg.output);
        }
        Command::Preset { name, out, seed } => {
            let preset = presets::find(&name).ok_or(ConfigError::UnknownPreset(name))?;
            let mut cfg = preset.config()?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(out) = out {
                cfg.output = out.display().to_string();
            }
            let summary = run(&cfg, &PathBuf::from(&cfg.output))?;
            println!("wrote {} files to {}", summary.files.len() + 1, cfg.output);
        }
        Command::ListPresets => {
            for p in presets::PRESETS {
                println!("{:<8} {}", p.name, p.summary);
            }
        }
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            println!("ok: {} ({})", cfg.scenario, cfg.mode.name());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
