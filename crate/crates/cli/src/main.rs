//! `sdd`: simulate shear-frame recordings, train one CNN per element,
//! evaluate Damage Possibility per scenario and emit plot-ready reports.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sdd_core::config::RunConfig;
use sdd_core::exec::Execution;
use sdd_core::pipeline;
use sdd_core::Error;

#[derive(Debug, Parser)]
#[command(
    name = "sdd",
    version,
    about = "Per-element CNN structural damage detection"
)]
struct Cli {
    /// Run config file (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Maximum concurrent element workers.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate rounds A and B for every scenario.
    Simulate,
    /// Frame round A, train one network per element, save checkpoints.
    Train {
        /// Comma-separated element indices to train.
        #[arg(long, value_delimiter = ',')]
        elements: Option<Vec<usize>>,
        /// Write a per-element frame manifest.
        #[arg(long)]
        manifest: bool,
    },
    /// Score checkpoints on held-out data.
    Evaluate {
        /// Add white Gaussian noise at this SNR (dB) before evaluating.
        #[arg(long, allow_negative_numbers = true)]
        snr: Option<f64>,
    },
    /// Per-scenario DP bar files and a throughput summary.
    Report,
}

/// 1 config, 2 I/O or missing input, 3 numeric or model.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidParameter(_) | Error::Split(_) | Error::Coverage(_) => 1,
        Error::Io { .. } | Error::Parse { .. } | Error::InsufficientData(_) => 2,
        _ => 3,
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => {
            if !path.exists() {
                return Err(Error::Config(format!(
                    "config file {} not found",
                    path.display()
                )));
            }
            RunConfig::load(path)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = load_config(cli)?;
    let exec = Execution::from_jobs(cfg.jobs);
    match &cli.command {
        Command::Simulate => {
            let paths = pipeline::cmd_simulate(&cfg, exec)?;
            println!(
                "wrote {} recordings to {}",
                paths.len(),
                cfg.paths.data_dir.display()
            );
        }
        Command::Train { elements, manifest } => {
            let out = pipeline::cmd_train(&cfg, elements.as_deref(), *manifest, exec)?;
            for r in &out.reports {
                println!(
                    "element {}: best epoch {}, validation accuracy {:.4}, test accuracy {:.4}",
                    r.element, r.best_epoch, r.best_validation_accuracy, r.test_accuracy
                );
            }
            println!(
                "wrote {} checkpoints to {}",
                out.checkpoints.len(),
                cfg.paths.checkpoint_dir.display()
            );
        }
        Command::Evaluate { snr } => {
            let out = pipeline::cmd_evaluate(&cfg, *snr, exec)?;
            for s in &out.eval.scenarios {
                let dps: Vec<String> = s.elements.iter().map(|e| format!("{:.1}", e.dp)).collect();
                println!(
                    "scenario {:2} damaged {:?}: DP [{}]",
                    s.scenario,
                    s.damaged,
                    dps.join(", ")
                );
            }
            println!("mean held-out accuracy {:.4}", out.eval.mean_accuracy()?);
        }
        Command::Report => {
            let out = pipeline::cmd_report(&cfg)?;
            let t = out.throughput;
            println!(
                "wrote {} bar files; {:.0} frames/s per network, {:.3} s per {:.0}-s recording for the ensemble",
                out.bar_files.len(),
                t.frames_per_second,
                t.ensemble_seconds,
                t.recording_seconds
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 1);
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "x");
        assert_eq!(
            exit_code(&Error::Io {
                path: "p".into(),
                source: io
            }),
            2
        );
        assert_eq!(exit_code(&Error::Numeric("x".into())), 3);
        assert_eq!(exit_code(&Error::Model("x".into())), 3);
    }

    #[test]
    fn flags_parse() {
        let cli =
            Cli::try_parse_from(["sdd", "train", "--elements", "3,7", "--seed", "4"]).unwrap();
        assert_eq!(cli.seed, Some(4));
        assert!(
            matches!(cli.command, Command::Train { elements: Some(ref e), .. } if e == &[3, 7])
        );
        let cli = Cli::try_parse_from(["sdd", "evaluate", "--snr", "-5"]).unwrap();
        assert!(matches!(cli.command, Command::Evaluate { snr: Some(s) } if s == -5.0));
    }
}
