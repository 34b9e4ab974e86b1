use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use cpca::dynamics::TerminationStatus;
use serde::Serialize;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one CLI run, written once per run into the output directory.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub artifacts: Vec<PathBuf>,
    /// Termination status per trial and stage (simulate only).
    pub statuses: Vec<Vec<TerminationStatus>>,
    pub wall_time_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            config,
            artifacts: Vec::new(),
            statuses: Vec::new(),
            wall_time_seconds: 0.0,
            error: None,
        }
    }

    /// Stamps the wall time and writes the manifest into `out`.
    pub fn finish(&mut self, out: &Path, start: Instant) -> Result<()> {
        self.wall_time_seconds = start.elapsed().as_secs_f64();
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        write_json(&out.join(MANIFEST_FILE), self)
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
