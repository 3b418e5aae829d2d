use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use sinet_core::{Result, SinetError};

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of one successful command invocation.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub tool_version: &'static str,
    pub config: Value,
    pub inputs: Vec<InputDigest>,
    pub seed: Option<u64>,
    pub artifacts: Vec<PathBuf>,
    pub started_at: String,
    pub finished_at: String,
    pub metrics: Value,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| io_err(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

pub fn io_err(path: &Path, source: std::io::Error) -> SinetError {
    SinetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub struct ManifestBuilder {
    command: String,
    started: DateTime<Utc>,
    inputs: Vec<InputDigest>,
    artifacts: Vec<PathBuf>,
}

impl ManifestBuilder {
    pub fn start(command: &str) -> Self {
        Self {
            command: command.to_string(),
            started: Utc::now(),
            inputs: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(InputDigest {
            path: path.to_path_buf(),
            sha256,
        });
        Ok(())
    }

    pub fn artifact(&mut self, path: &Path) {
        self.artifacts.push(path.to_path_buf());
    }

    /// Writes the manifest to `path` and returns it.
    pub fn finish(mut self, path: &Path, config: Value, seed: Option<u64>, metrics: Value) -> Result<RunManifest> {
        self.artifacts.push(path.to_path_buf());
        let manifest = RunManifest {
            command: self.command,
            argv: std::env::args().collect(),
            tool_version: env!("CARGO_PKG_VERSION"),
            config,
            inputs: self.inputs,
            seed,
            artifacts: self.artifacts,
            started_at: timestamp(self.started),
            finished_at: timestamp(Utc::now()),
            metrics,
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(path, text + "\n").map_err(|e| io_err(path, e))?;
        Ok(manifest)
    }
}
