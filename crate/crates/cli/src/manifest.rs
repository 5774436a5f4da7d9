use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub kind: String,
    /// Relative to the output directory.
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to reproduce a run and locate what it wrote.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub arguments: Vec<String>,
    pub seed: u64,
    pub threads: usize,
    /// Effective configuration after flag overrides.
    pub config: serde_json::Value,
    pub artifacts: Vec<Artifact>,
    pub feasible: bool,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub wall_clock_seconds: f64,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, threads: usize, config: serde_json::Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            arguments: std::env::args().skip(1).collect(),
            seed,
            threads,
            config,
            artifacts: Vec::new(),
            feasible: true,
            started_unix: unix_now(),
            finished_unix: 0,
            wall_clock_seconds: 0.0,
        }
    }

    /// Records an artifact already written under `out_dir`.
    pub fn add(&mut self, out_dir: &Path, kind: &str, relative: impl Into<PathBuf>) -> Result<()> {
        let relative = relative.into();
        let sha256 = sha256_file(&out_dir.join(&relative))?;
        self.artifacts.push(Artifact {
            kind: kind.to_string(),
            path: relative,
            sha256,
        });
        Ok(())
    }

    pub fn finish(&mut self, out_dir: &Path, wall_clock_seconds: f64) -> Result<PathBuf> {
        self.finished_unix = unix_now();
        self.wall_clock_seconds = wall_clock_seconds;
        let path = out_dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)?)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}
