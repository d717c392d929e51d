use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct FitTiming {
    pub label: String,
    pub seconds: f64,
    pub sweeps: usize,
    pub converged: bool,
    pub final_f: f64,
}

/// Record of one command invocation, written as `manifest.json` in the
/// output directory.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub started_at: String,
    pub finished_at: String,
    pub wall_seconds: f64,
    pub fits: Vec<FitTiming>,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub details: serde_json::Value,
    #[serde(skip)]
    clock: Option<std::time::Instant>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut file, &mut hasher)?;
    Ok(hex::encode(hasher.finalize()))
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start<C: Serialize>(command: &str, config: &C, seed: u64, inputs: &[PathBuf]) -> Result<Self> {
        let inputs = inputs
            .iter()
            .map(|p| {
                Ok(InputDigest {
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config: serde_json::to_value(config)?,
            inputs,
            started_at: now(),
            finished_at: String::new(),
            wall_seconds: 0.0,
            fits: Vec::new(),
            outputs: Vec::new(),
            warnings: Vec::new(),
            details: serde_json::Value::Null,
            clock: Some(std::time::Instant::now()),
        })
    }

    pub fn finish(mut self, dir: &Path) -> Result<()> {
        self.finished_at = now();
        self.wall_seconds = self.clock.map_or(0.0, |c| c.elapsed().as_secs_f64());
        fmds::io::write_json(&dir.join(MANIFEST_FILE), &self)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_known_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("abc.txt");
        std::fs::write(&path, "abc").unwrap();
        assert_eq!(
            sha256_file(&path).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
