use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hydot_rb::harness::{run_experiment, validate_suite, ExperimentConfig, HarnessError};
use hydot_rb::mesh::{generate_mesh, write_mesh};

#[derive(Parser)]
#[command(version, about = "Reduced basis sample selection experiments for a diffuse optical model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the selector comparison and write CSV tables and SVG plots.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated subset of greedy,gradient,metropolis,log_spacing.
        #[arg(long)]
        algorithms: Option<String>,
        /// Comma-separated basis sizes.
        #[arg(long)]
        sizes: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check the model invariants and print one line per check.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate the configured mesh and write it as text.
    Mesh {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(path: &PathBuf, overrides: &[(&str, Option<String>)]) -> Result<ExperimentConfig, HarnessError> {
    let overrides: Vec<(&str, &str)> = overrides
        .iter()
        .filter_map(|(k, v)| v.as_deref().map(|v| (*k, v)))
        .collect();
    ExperimentConfig::from_file_with(path, &overrides)
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run {
            config,
            out,
            algorithms,
            sizes,
            seed,
        } => {
            let cfg = load(
                &config,
                &[
                    ("experiment.output_dir", out.map(|p| p.display().to_string())),
                    ("experiment.algorithms", algorithms),
                    ("experiment.sizes", sizes),
                    ("experiment.seed", seed.map(|s| s.to_string())),
                ],
            )?;
            let records = run_experiment(&cfg)?;
            let failed = records.iter().filter(|r| r.error.is_some()).count();
            println!("wrote {} rows to {}", records.len(), cfg.output_dir.display());
            if failed > 0 {
                return Err(HarnessError::Runtime(format!(
                    "{failed} cells failed; see errors.csv"
                )));
            }
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = load(&config, &[])?;
            let report = validate_suite(&cfg);
            print!("{report}");
            if report.passed() {
                Ok(())
            } else {
                Err(HarnessError::Invariant("validation suite reported failures".into()))
            }
        }
        Command::Mesh { config, out } => {
            let cfg = load(&config, &[])?;
            let mesh = generate_mesh(&cfg.geometry, cfg.mesh_target_elements, cfg.mesh_seed)
                .map_err(|e| HarnessError::Runtime(e.to_string()))?;
            write_mesh(&mesh, &out).map_err(|e| HarnessError::Runtime(e.to_string()))?;
            println!(
                "{} vertices, {} triangles -> {}",
                mesh.num_vertices(),
                mesh.num_triangles(),
                out.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
