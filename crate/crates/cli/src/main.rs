use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use cpca_cli::analysis::{perturb, stability};
use cpca_cli::config::{load, ExperimentConfig, PerturbConfig, StabilityConfig};
use cpca_cli::manifest::{write_json, RunManifest};
use cpca_cli::simulate::simulate;
use cpca_cli::verify::{verify, Fault};

#[derive(Debug, Parser)]
#[command(name = "cpca", version, about = "Coupled PCA learning rules: simulation and stability analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate a learning rule over seeded trials and write trajectories.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `base_seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Report an analytic fixed-point spectrum with its numeric cross-check.
    Stability {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the eigenvector seed from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the perturbation scalar-product experiment.
    Perturb {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check the library invariants; exits non-zero on any failure.
    Verify {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Break the harness on purpose to confirm failures are detected.
        #[arg(long, value_enum)]
        inject_fault: Option<Fault>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let parsed = load::<ExperimentConfig>(&config);
            let mut cfg = match parsed {
                Ok(cfg) => cfg,
                Err(e) => {
                    if let Some(out) = &out {
                        failed_manifest("simulate", out, &e)?;
                    }
                    return Err(e).with_context(|| format!("invalid config {}", config.display()));
                }
            };
            if let Some(seed) = seed {
                cfg.base_seed = seed;
            }
            let out = out.unwrap_or_else(|| cfg.output_dir.clone());
            let manifest = simulate(&cfg, &out)?;
            emit(&manifest)?;
            Ok(true)
        }
        Command::Stability { config, out, seed } => {
            let mut cfg: StabilityConfig = load_or_record("stability", &config, out.as_deref())?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            report("stability", &cfg, out.as_deref(), || stability(&cfg))
        }
        Command::Perturb { config, out, seed } => {
            let mut cfg: PerturbConfig = load_or_record("perturb", &config, out.as_deref())?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            report("perturb", &cfg, out.as_deref(), || perturb(&cfg))
        }
        Command::Verify { out, inject_fault } => {
            let start = Instant::now();
            let result = verify(inject_fault);
            emit(&result)?;
            if let Some(out) = &out {
                write_json(&out_file(out, "verify")?, &result)?;
                let mut manifest = RunManifest::new("verify", serde_json::json!({ "inject_fault": inject_fault.is_some() }));
                manifest.artifacts = vec![PathBuf::from("verify.json")];
                if !result.passed() {
                    manifest.error = Some(format!("failed checks: {}", result.failures.join(", ")));
                }
                manifest.finish(out, start)?;
            }
            Ok(result.passed())
        }
    }
}

/// Pretty JSON on stdout; a closed pipe is not an error.
fn emit<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout(), "{text}") {
        Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn out_file(out: &Path, command: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out.join(format!("{command}.json")))
}

fn failed_manifest(command: &str, out: &Path, error: &dyn std::fmt::Display) -> Result<()> {
    let mut manifest = RunManifest::new(command, serde_json::Value::Null);
    manifest.error = Some(error.to_string());
    manifest.finish(out, Instant::now())
}

fn load_or_record<T: serde::de::DeserializeOwned>(command: &str, path: &Path, out: Option<&Path>) -> Result<T> {
    load(path).or_else(|e| {
        if let Some(out) = out {
            failed_manifest(command, out, &e)?;
        }
        Err(e).with_context(|| format!("invalid config {}", path.display()))
    })
}

/// Prints the report and, with an output directory, writes it plus a manifest.
fn report<C: Serialize, R: Serialize>(command: &str, cfg: &C, out: Option<&Path>, body: impl FnOnce() -> Result<R>) -> Result<bool> {
    let start = Instant::now();
    let result = body();
    if let Some(out) = out {
        let mut manifest = RunManifest::new(command, serde_json::to_value(cfg)?);
        match &result {
            Ok(value) => {
                write_json(&out_file(out, command)?, value)?;
                manifest.artifacts = vec![PathBuf::from(format!("{command}.json"))];
            }
            Err(e) => manifest.error = Some(format!("{e:#}")),
        }
        manifest.finish(out, start)?;
    }
    emit(&result?)?;
    Ok(true)
}
