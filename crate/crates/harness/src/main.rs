//! `pspin`: reproducible desk-scale experiments on spherical p-spin landscapes.
//!
//! Parameters come from a preset, then the `--config` TOML file, then flags
//! (later layers win). Exit codes: 0 success, 2 configuration error, 3 a
//! built-in check failed under `--check`, 1 anything else.

mod config;
mod experiments;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use pspin_core::optimizers::OmegaCoupling;

use config::{ConfigError, ExperimentConfig, Overrides};
use experiments::{FollowMode, Optimizer, Outcome, SpectrumAt};
use output::RunWriter;

#[derive(Parser, Debug)]
#[command(name = "pspin", version, about = "Spherical p-spin experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML file with any of the parameter keys (and `preset`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for replica-level parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Exit with code 3 when a built-in check fails.
    #[arg(long, global = true)]
    check: bool,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Coupling {
    Shared,
    Independent,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Riemannian Hessian spectra at random points or gradient-ascent endpoints.
    Spectrum {
        #[arg(long, value_enum, default_value = "random")]
        at: SpectrumAt,
        #[arg(long, default_value_t = 60)]
        bins: usize,
    },
    /// Gradient or Hessian ascent over replicas.
    Optimize {
        #[arg(long, value_enum, default_value = "gd")]
        algorithm: Optimizer,
    },
    /// State following along a correlated chain.
    Follow {
        #[arg(long, value_enum, default_value = "planted")]
        mode: FollowMode,
        /// Skip the boundedness gate.
        #[arg(long)]
        no_bdd: bool,
    },
    /// Stability and overlap sweeps.
    Stability {
        #[arg(long, value_delimiter = ',', default_value = "constant,rounded-linear,gd")]
        algorithms: Vec<String>,
        #[arg(long, default_value = "0.001,0.01,0.1")]
        eps: String,
        /// Overlap grid; empty skips the overlap table.
        #[arg(long, default_value = "")]
        qs: String,
        #[arg(long, value_enum, default_value = "shared")]
        coupling: Coupling,
    },
    /// Monte Carlo study of the success-and-stability event.
    Events {
        /// Stability estimate for the plug-in bound.
        #[arg(long)]
        s_hat: Option<f64>,
        /// Multiplies the stability threshold (negative controls use 0.1).
        #[arg(long, default_value_t = 1.0)]
        stab_factor: f64,
        #[arg(long)]
        no_bdd: bool,
    },
    /// Check a chain ensemble's covariance against ρ^|i-j|.
    ChainVerify {
        /// Use the forward recursion instead of bridge fills.
        #[arg(long)]
        forward: bool,
    },
    /// Estimate the boundedness constant.
    Calibrate {
        #[arg(long, default_value_t = 1.25)]
        safety: f64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Spectrum { .. } => "spectrum",
            Command::Optimize { .. } => "optimize",
            Command::Follow { .. } => "follow",
            Command::Stability { .. } => "stability",
            Command::Events { .. } => "events",
            Command::ChainVerify { .. } => "chain-verify",
            Command::Calibrate { .. } => "calibrate",
        }
    }
}

fn run(cli: &Cli, cfg: &ExperimentConfig, w: &mut RunWriter) -> Result<Outcome> {
    match &cli.command {
        Command::Spectrum { at, bins } => {
            if *bins == 0 {
                return Err(ConfigError("bins must be positive".into()).into());
            }
            experiments::spectrum(cfg, w, *at, *bins)
        }
        Command::Optimize { algorithm } => experiments::optimize(cfg, w, *algorithm),
        Command::Follow { mode, no_bdd } => experiments::follow(cfg, w, *mode, !no_bdd),
        Command::Stability { algorithms, eps, qs, coupling } => {
            let eps = experiments::parse_list(eps)?;
            let qs = if qs.trim().is_empty() { Vec::new() } else { experiments::parse_list(qs)? };
            let coupling = match coupling {
                Coupling::Shared => OmegaCoupling::Shared,
                Coupling::Independent => OmegaCoupling::Independent,
            };
            experiments::stability(cfg, w, algorithms, &eps, &qs, coupling)
        }
        Command::Events { s_hat, stab_factor, no_bdd } => experiments::events(cfg, w, *s_hat, *stab_factor, !no_bdd),
        Command::ChainVerify { forward } => experiments::chain_verify(cfg, w, *forward),
        Command::Calibrate { safety } => experiments::calibrate(cfg, w, *safety),
    }
}

fn is_config_error(e: &anyhow::Error) -> bool {
    e.downcast_ref::<ConfigError>().is_some()
        || matches!(
            e.downcast_ref::<pspin_core::Error>(),
            Some(pspin_core::Error::InvalidParameter(_) | pspin_core::Error::InsufficientReplicas { .. } | pspin_core::Error::MemoryBudget { .. })
        )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("configuration error: --jobs must be positive");
            return ExitCode::from(2);
        }
        pspin_core::par::set_jobs(j);
    }
    let file = match cli.config.as_deref().map(Overrides::from_file).transpose() {
        Ok(f) => f,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(2);
        }
    };
    let cfg = match ExperimentConfig::resolve(cli.command.name(), file.as_ref(), &cli.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(2);
        }
    };
    let start = Instant::now();
    let outcome = RunWriter::create(&cfg).and_then(|mut w| {
        let outcome = run(&cli, &cfg, &mut w)?;
        let dir = w.finish(&format!("{:?}", cli.command), &outcome.summary, &outcome.checks, start.elapsed().as_secs_f64())?;
        Ok((outcome, dir))
    });
    match outcome {
        Ok((outcome, dir)) => {
            println!("{} -> {}", cfg.experiment, dir.display());
            println!("{}", serde_json::to_string_pretty(&outcome.summary).unwrap_or_default());
            let mut failed = false;
            for c in &outcome.checks {
                println!("check {}: {} ({})", c.name, if c.pass { "pass" } else { "FAIL" }, c.detail);
                failed |= !c.pass;
            }
            if failed && cli.check {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) if is_config_error(&e) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
