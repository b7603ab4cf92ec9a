//! Run manifests: which config, seed and tool version produced which files.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rbm_core::ScenarioConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// sha256 of the canonical JSON form of the effective config.
    pub config_sha256: String,
    pub seed: u64,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub outputs: Vec<PathBuf>,
}

pub fn config_hash(cfg: &ScenarioConfig) -> String {
    let digest = Sha256::digest(cfg.canonical_json().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl RunManifest {
    pub fn new(command: &str, cfg: &ScenarioConfig, started: f64) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_sha256: config_hash(cfg),
            seed: cfg.run.seed,
            started_unix_s: started,
            finished_unix_s: started,
            outputs: Vec::new(),
        }
    }

    pub fn finish(mut self, path: &Path) -> std::io::Result<()> {
        self.finished_unix_s = unix_now();
        self.outputs.sort();
        let text = serde_json::to_string_pretty(&self).expect("manifest serialises");
        std::fs::write(path, text + "\n")
    }
}
