use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Deserialize;
use serde_json::Value;

use lodadapt::config::{load, MeshConfig, PRESETS};
use lodadapt::experiment::{execute, write_outputs};
use lodadapt::field::{write_field, write_field_binary, FieldSpec};
use lodadapt::{Error, Result};

#[derive(Parser)]
#[command(name = "lodadapt", version, about = "Adaptive PG-LOD solver for sequences of rough coefficients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config and/or a preset.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Allow meshes above the desk-scale limit.
        #[arg(long)]
        paper_scale: bool,
    },
    /// Generate a coefficient field and write it to a file.
    GenField {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// List the built-in presets.
    Presets,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GenSpec {
    mesh: MeshConfig,
    field: FieldSpec,
    #[serde(default)]
    binary: bool,
}

fn read_json(path: &PathBuf) -> Result<Value> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, preset, out, paper_scale } => {
            if config.is_none() && preset.is_none() {
                return Err(Error::InvalidConfig("give --config, --preset, or both".into()));
            }
            let user = config.as_ref().map(read_json).transpose()?;
            let mut cfg = load(preset.as_deref(), user)?;
            if paper_scale {
                cfg.paper_scale = Some(true);
            }
            let (resolved, applied) = cfg.resolve()?;
            log::info!("running {:?} into {}", resolved.experiment, out.display());
            let report = execute(&resolved)?;
            let files = write_outputs(&resolved, &applied, preset.as_deref(), &report, &out)?;
            println!("wrote {} files to {}", files.len() + 1, out.display());
        }
        Command::GenField { spec, out } => {
            let spec: GenSpec = serde_json::from_value(read_json(&spec)?)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", spec.display())))?;
            let mesh = spec.mesh.build()?;
            let coef = spec.field.generate(&mesh)?;
            let fine = mesh.fine();
            let counts = &fine.cells()[..fine.dim()];
            if spec.binary {
                write_field_binary(&out, counts, coef.values())?;
            } else {
                write_field(&out, counts, coef.values())?;
            }
            println!("wrote {} values to {}", coef.len(), out.display());
        }
        Command::Presets => {
            for p in PRESETS {
                println!("{p}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("LODADAPT_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size the thread pool: {e}");
                }
            }
            _ => {
                eprintln!("error: LODADAPT_THREADS must be a positive integer, got '{v}'");
                return ExitCode::from(2);
            }
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
