use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use cek_core::report::{run_pipeline, PipelineConfig, RunOptions};
use cek_core::synth::{generate, write_oracle_csv, SynthConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cek", version, about = "Cross-validated evaluation of causal inference models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a pipeline described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Artifact directory; overrides the config.
        #[arg(long, env = "CEK_OUTPUT_DIR")]
        output: Option<PathBuf>,
        /// Replaces the fold seed of the config.
        #[arg(long)]
        seed_override: Option<u64>,
        /// Evaluate only the named subset from the config.
        #[arg(long)]
        subset: Option<String>,
    },
    /// Write a confounded synthetic cohort as CSV.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        effect: f64,
        #[arg(long)]
        output: PathBuf,
        /// Also write true propensities and potential outcomes.
        #[arg(long)]
        oracle: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            output,
            seed_override,
            subset,
        } => {
            let cfg = PipelineConfig::load(&config)?;
            let out = run_pipeline(
                &cfg,
                &RunOptions {
                    output_dir: output,
                    seed: seed_override,
                    subset,
                },
            )?;
            println!("{} files written to {}", out.manifest.files.len() + 1, out.dir.display());
        }
        Command::Synth {
            n,
            d,
            seed,
            effect,
            output,
            oracle,
        } => {
            let mut cfg = SynthConfig::confounded(n, d, seed);
            cfg.effect = effect;
            let (frame, truth) = generate(&cfg)?;
            frame.write_csv(&output).with_context(|| format!("writing {}", output.display()))?;
            if let Some(path) = oracle {
                write_oracle_csv(&path, &frame, &truth).with_context(|| format!("writing {}", path.display()))?;
            }
            println!("{} samples written to {}; true ATE {}", frame.n(), output.display(), truth.ate);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
