//! Per-command run manifest: what ran, with which effective config, on which
//! inputs (by content hash), producing which outputs, in how long. Written
//! atomically so a crash never leaves a half-manifest behind.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    /// Effective configuration after flag > config-file > default merging.
    pub config: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Input path -> sha256 of its content at read time.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub wall_time_seconds: f64,
    pub unix_time: u64,
}

pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            config: serde_json::Value::Null,
            seed: None,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn config(&mut self, cfg: impl Serialize) {
        self.config = serde_json::to_value(cfg).expect("config serializes");
    }

    pub fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    /// Hash one input file into the manifest.
    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let digest = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    /// Hash the canonical files of a dataset directory.
    pub fn input_dataset_dir(&mut self, dir: &Path) -> Result<(), CliError> {
        for name in ["manifest.json", "train.csv", "valid.csv", "test.csv"] {
            let path = dir.join(name);
            if path.is_file() {
                self.input(&path)?;
            }
        }
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Finalize and write the manifest atomically (temp file + rename).
    pub fn write(self, path: &Path) -> Result<(), CliError> {
        let manifest = RunManifest {
            command: self.command,
            argv: std::env::args().collect(),
            config: self.config,
            seed: self.seed,
            inputs: self.inputs,
            outputs: self.outputs,
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
            unix_time: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, body).map_err(|e| CliError::runtime(format!("{}: {e}", tmp.display())))?;
        fs::rename(&tmp, path)
            .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        log::info!("run manifest written to {}", path.display());
        Ok(())
    }
}

/// Default manifest location: beside the primary output (inside it for a
/// directory output), or `tinymatch-run.json` in the working directory for
/// print-only commands.
pub fn manifest_path(explicit: Option<PathBuf>, primary_out: Option<&Path>) -> PathBuf {
    if let Some(path) = explicit {
        return path;
    }
    match primary_out {
        Some(out) if out.is_dir() => out.join("run.json"),
        Some(out) => {
            let mut name = out.file_name().unwrap_or_default().to_os_string();
            name.push(".run.json");
            out.with_file_name(name)
        }
        None => PathBuf::from("tinymatch-run.json"),
    }
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut file = fs::File::open(path)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file
            .read(&mut buf)
            .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}
