//! Artifact writing. Every file carries the config snapshot and the code hash;
//! wall-clock data goes to `timing.json` only, so that replaying a run with the
//! same config and seeds reproduces every other file byte for byte.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;

pub const CODE_HASH: &str = env!("PSPIN_CODE_HASH");

pub struct RunWriter {
    dir: PathBuf,
    config: Value,
    artifacts: Vec<String>,
}

impl RunWriter {
    pub fn create(cfg: &ExperimentConfig) -> Result<Self> {
        fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
        let mut w = Self { dir: cfg.out.clone(), config: cfg.snapshot(), artifacts: Vec::new() };
        w.put("config.toml", &format!("# code: {CODE_HASH}\n{}", cfg.replay_file()))?;
        Ok(w)
    }

    fn put(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn preamble(&self) -> String {
        format!("# config: {}\n# code: {}\n", self.config, CODE_HASH)
    }

    /// CSV with a `#` preamble; `header` is the column line.
    pub fn csv(&mut self, name: &str, header: &str, rows: &[String]) -> Result<()> {
        let mut s = self.preamble();
        s.push_str(header);
        s.push('\n');
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        self.put(name, &s)
    }

    /// Whitespace-separated columns for gnuplot, with the same preamble.
    pub fn dat(&mut self, name: &str, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        let mut s = self.preamble();
        s.push_str(&format!("# {}\n", columns.join(" ")));
        for r in rows {
            let line: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        self.put(name, &s)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, data: &T) -> Result<()> {
        let doc = json!({ "config": self.config, "code_hash": CODE_HASH, "data": data });
        self.put(name, &(serde_json::to_string_pretty(&doc)? + "\n"))
    }

    /// `run.json` (summary plus artifact list) and the separate `timing.json`.
    pub fn finish<T: Serialize>(mut self, command: &str, summary: &T, checks: &[Check], wall_seconds: f64) -> Result<PathBuf> {
        let mut artifacts = self.artifacts.clone();
        artifacts.push("run.json".into());
        let record = json!({ "command": command, "summary": summary, "checks": checks, "artifacts": artifacts });
        self.json("run.json", &record)?;
        let timing = json!({ "wall_seconds": wall_seconds, "code_hash": CODE_HASH });
        fs::write(self.dir.join("timing.json"), serde_json::to_string_pretty(&timing)? + "\n")?;
        Ok(self.dir)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.to_string(), pass, detail: detail.into() }
    }
}
