//! Experiment configuration. Values are resolved in three layers, later layers
//! winning: the named preset, then the config file, then command-line flags.

use std::path::{Path, PathBuf};

use pspin_core::presets::Preset;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

/// One optional value per tunable; used for both the file and the flags layer.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    /// Preset to start from (paper-regime, planted, fast-ci).
    #[arg(long, global = true)]
    pub preset: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub p: Option<usize>,
    /// Number of chain steps K.
    #[arg(long = "k-steps", global = true)]
    pub k_steps: Option<usize>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    #[arg(long, global = true)]
    pub d: Option<usize>,
    #[arg(long, global = true)]
    pub iota: Option<f64>,
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    #[arg(long = "max-iters", global = true)]
    pub max_iters: Option<usize>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub mu: Option<f64>,
    #[arg(long, global = true)]
    pub replicas: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    /// `self` with every value set in `top` replaced.
    fn layered(self, top: &Overrides) -> Overrides {
        macro_rules! pick {
            ($($f:ident),*) => { Overrides { $($f: top.$f.clone().or(self.$f),)* } };
        }
        pick!(preset, seed, n, p, k_steps, epsilon, gamma, delta, d, iota, eta, max_iters, tol, mu, replicas, out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub preset: String,
    pub params: Preset,
    pub out: PathBuf,
}

pub const DEFAULT_PRESET: &str = "fast-ci";

impl ExperimentConfig {
    pub fn resolve(experiment: &str, file: Option<&Overrides>, flags: &Overrides) -> Result<Self, ConfigError> {
        let merged = file.cloned().unwrap_or_default().layered(flags);
        let preset = merged.preset.clone().unwrap_or_else(|| DEFAULT_PRESET.to_string());
        let mut p = Preset::by_name(&preset).ok_or_else(|| ConfigError(format!("unknown preset {preset:?}")))?;
        macro_rules! apply {
            ($($f:ident),*) => { $(if let Some(v) = merged.$f.clone() { p.$f = v; })* };
        }
        apply!(seed, n, p, k_steps, epsilon, gamma, delta, d, iota, eta, max_iters, tol, mu, replicas);
        let out = merged.out.unwrap_or_else(|| PathBuf::from("runs").join(experiment));
        let cfg = Self { experiment: experiment.to_string(), preset, params: p, out };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.params;
        let mut bad = Vec::new();
        if p.n < 2 {
            bad.push(format!("n = {} (need at least 2)", p.n));
        }
        if p.p < 2 {
            bad.push(format!("p = {} (need at least 2)", p.p));
        }
        if p.k_steps < 1 {
            bad.push("k_steps must be at least 1".to_string());
        }
        if !(0.0..1.0).contains(&p.epsilon) {
            bad.push(format!("epsilon = {} outside [0, 1)", p.epsilon));
        }
        for (name, v) in [("gamma", p.gamma), ("delta", p.delta), ("iota", p.iota), ("eta", p.eta), ("tol", p.tol)] {
            if !(v > 0.0 && v.is_finite()) {
                bad.push(format!("{name} = {v} must be positive"));
            }
        }
        if p.delta >= 1.0 {
            bad.push(format!("delta = {} must be below 1", p.delta));
        }
        if p.d >= p.n {
            bad.push(format!("d = {} must be below n = {}", p.d, p.n));
        }
        if p.max_iters == 0 || p.replicas == 0 {
            bad.push("max_iters and replicas must be positive".to_string());
        }
        if !p.mu.is_finite() || p.mu < 0.0 {
            bad.push(format!("mu = {} must be non-negative", p.mu));
        }
        if self.preset == "paper-regime" {
            bad.extend(p.ordering_violations());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ConfigError(bad.join("; ")))
        }
    }

    /// Everything but the output directory, so a replay elsewhere matches byte for byte.
    pub fn snapshot(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("out");
        }
        v
    }

    /// A config file that reproduces this run when passed back through `--config`.
    pub fn replay_file(&self) -> String {
        let p = &self.params;
        let o = Overrides {
            preset: Some(self.preset.clone()),
            seed: Some(p.seed),
            n: Some(p.n),
            p: Some(p.p),
            k_steps: Some(p.k_steps),
            epsilon: Some(p.epsilon),
            gamma: Some(p.gamma),
            delta: Some(p.delta),
            d: Some(p.d),
            iota: Some(p.iota),
            eta: Some(p.eta),
            max_iters: Some(p.max_iters),
            tol: Some(p.tol),
            mu: Some(p.mu),
            replicas: Some(p.replicas),
            out: None,
        };
        toml::to_string(&o).expect("config serializes")
    }
}
